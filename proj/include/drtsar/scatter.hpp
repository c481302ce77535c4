#pragma once

#include <string>
#include <vector>

#include "drtsar/scene.hpp"

namespace drtsar {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

enum class Polarization { HH, VV };
enum class PsdKind { Gaussian, Exponential };

/// Parses "HH"/"VV" (case-insensitive). Cross-pol channels are rejected:
/// both scattering branches give identically zero HV/VH backscatter.
Polarization parse_polarization(const std::string& s);
PsdKind parse_psd_kind(const std::string& s);
const char* to_string(Polarization p);
const char* to_string(PsdKind k);

struct WaveConfig {
  double frequency = 0.0;   // Hz
  double wavelength = 0.0;  // m
  double wavenumber = 0.0;  // rad/m
  Polarization polarization = Polarization::HH;
  PsdKind psd_kind = PsdKind::Gaussian;

  static WaveConfig make(double frequency_hz, Polarization pol = Polarization::HH,
                         PsdKind psd = PsdKind::Gaussian);

  friend bool operator==(const WaveConfig&, const WaveConfig&) = default;
};

/// Backscatter coefficient and its partials with respect to the four parameters.
struct SigmaGrad {
  double sigma = 0.0;
  double d_h = 0.0;
  double d_l = 0.0;
  double d_eps = 0.0;
  double d_tau = 0.0;

  BsdfParams as_params() const { return {d_h, d_l, d_eps, d_tau}; }
};

/// Normal-incidence Fresnel amplitude (1 - sqrt(eps)) / (1 + sqrt(eps)).
double fresnel_r0(double eps_r);

/// Squared Fresnel reflectivity for HH, or the VV SPM polarization factor.
double fresnel_sq(double theta, double eps_r, Polarization pol);

/// Isotropic roughness spectrum W(k_dx, k_dy), m^4.
double psd(double k_dx, double k_dy, double h, double l, PsdKind kind);

/// First-order small-perturbation backscatter (diffuse term).
double sigma_spm(double theta, const BsdfParams& params, const WaveConfig& wave);

/// Kirchhoff (geometric-optics) backscatter for a Gaussian-correlated surface;
/// mean-square slope 2h^2/l^2. Identical for HH and VV.
double sigma_ka(double theta, const BsdfParams& params);

/// (1 - tau) * sigma_spm + tau * sigma_ka, with analytic partials.
SigmaGrad bsdf_eval(double theta, const BsdfParams& params, const WaveConfig& wave);

/// Same as bsdf_eval but driven by cos(theta); used on the render hot path.
SigmaGrad bsdf_eval_cos(double cos_theta, const BsdfParams& params, const WaveConfig& wave);

struct ValidityCondition {
  std::string name;  // e.g. "spm:kh", "ka:kl"
  double lhs = 0.0;
  double rhs = 0.0;  // condition holds when lhs op rhs (see name)
};

struct ValidityReport {
  bool spm_ok = true;
  bool ka_ok = true;
  std::vector<ValidityCondition> violated;

  bool violates(const std::string& name) const;
};

/// Numeric stand-in for "much less than one".
struct ValidityThresholds {
  double much_less = 0.3;
};

/// SPM: kh << 1, k^3 h^2 l << 1, sqrt(2) h / l < 0.3.
/// KA:  kl > 6, kh > sqrt(10) / (2 cos theta), R_c > lambda, l^2 > 2.76 h lambda,
/// where R_c = l^2 / (h sqrt(24/pi)) is the radius of curvature of a Gaussian surface.
ValidityReport check_validity(const BsdfParams& params, double theta, const WaveConfig& wave,
                              const ValidityThresholds& thresholds = {});

/// Pluggable per-hit scattering kernel used by the renderer.
class ScatterModel {
 public:
  virtual ~ScatterModel() = default;
  virtual SigmaGrad evaluate(double cos_theta, const BsdfParams& params) const = 0;
};

class DoubleScaleBsdf final : public ScatterModel {
 public:
  explicit DoubleScaleBsdf(WaveConfig wave) : wave_(wave) {}
  SigmaGrad evaluate(double cos_theta, const BsdfParams& params) const override {
    return bsdf_eval_cos(cos_theta, params, wave_);
  }
  const WaveConfig& wave() const { return wave_; }

 private:
  WaveConfig wave_;
};

}  // namespace drtsar
