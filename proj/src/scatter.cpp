#include "drtsar/scatter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "drtsar/error.hpp"

namespace drtsar {

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

void require_eps(double eps_r) {
  if (!(eps_r >= 1.0) || !std::isfinite(eps_r)) {
    throw DomainError("relative permittivity must be >= 1, got " + std::to_string(eps_r));
  }
}

void require_roughness(double h, double l) {
  if (!(h > 0.0) || !(l > 0.0) || !std::isfinite(h) || !std::isfinite(l)) {
    throw DomainError("roughness requires h > 0 and l > 0 (h=" + std::to_string(h) +
                      ", l=" + std::to_string(l) + ")");
  }
}

void require_theta(double theta) {
  if (!(theta >= 0.0 && theta < kPi / 2)) {
    throw DomainError("incidence angle must lie in [0, pi/2), got " + std::to_string(theta));
  }
}

void require_cos(double c) {
  if (!(c > 0.0 && c <= 1.0)) {
    throw DomainError("cos(theta) must lie in (0, 1], got " + std::to_string(c));
  }
}

// cos(theta) with sin^2(theta) carried separately so grazing and near-normal angles keep precision.
struct Incidence {
  double c, s2;
};

Incidence from_theta(double theta) {
  const double s = std::sin(theta);
  return {std::cos(theta), s * s};
}

Incidence from_cos(double c) { return {c, (1.0 - c) * (1.0 + c)}; }

struct ValueAndSlope {
  double value;
  double d_eps;
};

// Polarization factor f_pq(theta, eps) and its eps-derivative, from cos(theta).
ValueAndSlope fresnel_factor(Incidence in, double eps, Polarization pol) {
  const double c = in.c;
  const double s2 = in.s2;
  const double w = std::sqrt((eps - 1.0) + c * c);
  if (pol == Polarization::HH) {
    const double sum = c + w;
    const double r = (c - w) / sum;
    const double dr = -c / (w * sum * sum);
    return {r * r, 2.0 * r * dr};
  }
  const double a = (eps - 1.0) * (s2 - eps * c * c);
  const double da = (s2 - eps * c * c) - (eps - 1.0) * c * c;
  const double d = eps * c + w;
  const double dd = c + 0.5 / w;
  const double g = a / (d * d);
  const double dg = da / (d * d) - 2.0 * g * dd / d;
  return {g * g, 2.0 * g * dg};
}

struct SpmTerms {
  double sigma, d_h, d_l, d_eps;
};

SpmTerms spm_terms(Incidence in, const BsdfParams& p, const WaveConfig& wave) {
  const double k = wave.wavenumber;
  const double c = in.c;
  const double s2 = in.s2;
  const double kd2 = 4.0 * k * k * s2;  // k_dx^2 + k_dy^2 in monostatic backscatter
  const double h = p.h;
  const double l = p.l;

  double w = 0.0;
  double dw_dl = 0.0;
  if (wave.psd_kind == PsdKind::Gaussian) {
    w = h * h * l * l / (4.0 * kPi) * std::exp(-kd2 * l * l / 4.0);
    dw_dl = w * (2.0 / l - kd2 * l / 2.0);
  } else {
    const double denom = 1.0 + kd2 * l * l;
    w = h * h * l * l / (kPi * kPi * denom);
    dw_dl = w * (2.0 / l - 2.0 * kd2 * l / denom);
  }
  const double dw_dh = 2.0 * w / h;

  const auto f = fresnel_factor(in, p.eps_r, wave.polarization);
  const double k2 = k * k;
  const double c2 = c * c;
  const double amp = 8.0 * k2 * k2 * c2 * c2;
  return {amp * w * f.value, amp * dw_dh * f.value, amp * dw_dl * f.value, amp * w * f.d_eps};
}

struct KaTerms {
  double sigma, d_h, d_l, d_eps;
};

KaTerms ka_terms(Incidence in, const BsdfParams& p) {
  const double se = std::sqrt(p.eps_r);
  const double r0 = (1.0 - se) / (1.0 + se);
  const double dr0 = -1.0 / (se * (1.0 + se) * (1.0 + se));
  const double q = p.l * p.l / (4.0 * p.h * p.h);  // 1 / (2 m^2), m^2 = 2 h^2 / l^2
  const double c2 = in.c * in.c;
  const double tan2 = in.s2 / c2;
  const double e = std::exp(-tan2 * q);
  const double base = e / (c2 * c2);

  const double sigma = r0 * r0 * q * base;
  const double ds_dq = r0 * r0 * base * (1.0 - tan2 * q);
  return {sigma, ds_dq * (-2.0 * q / p.h), ds_dq * (2.0 * q / p.l), 2.0 * r0 * dr0 * q * base};
}

}  // namespace

Polarization parse_polarization(const std::string& s) {
  const auto u = upper(s);
  if (u == "HH") return Polarization::HH;
  if (u == "VV") return Polarization::VV;
  if (u == "HV" || u == "VH") {
    throw DomainError("cross-polarized channel '" + s +
                      "' is identically zero in both scattering models; use HH or VV");
  }
  throw DomainError("unknown polarization '" + s + "'");
}

PsdKind parse_psd_kind(const std::string& s) {
  const auto u = upper(s);
  if (u == "GAUSSIAN" || u == "GAUSS") return PsdKind::Gaussian;
  if (u == "EXPONENTIAL" || u == "EXP") return PsdKind::Exponential;
  throw DomainError("unknown roughness spectrum '" + s + "'");
}

const char* to_string(Polarization p) { return p == Polarization::HH ? "HH" : "VV"; }
const char* to_string(PsdKind k) { return k == PsdKind::Gaussian ? "gaussian" : "exponential"; }

WaveConfig WaveConfig::make(double frequency_hz, Polarization pol, PsdKind psd) {
  if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz)) {
    throw DomainError("frequency must be positive");
  }
  WaveConfig w;
  w.frequency = frequency_hz;
  w.wavelength = kSpeedOfLight / frequency_hz;
  w.wavenumber = 2.0 * kPi / w.wavelength;
  w.polarization = pol;
  w.psd_kind = psd;
  return w;
}

double fresnel_r0(double eps_r) {
  require_eps(eps_r);
  const double s = std::sqrt(eps_r);
  return (1.0 - s) / (1.0 + s);
}

double fresnel_sq(double theta, double eps_r, Polarization pol) {
  require_theta(theta);
  require_eps(eps_r);
  return fresnel_factor(from_theta(theta), eps_r, pol).value;
}

double psd(double k_dx, double k_dy, double h, double l, PsdKind kind) {
  require_roughness(h, l);
  if (kind == PsdKind::Gaussian) {
    return h * h * l * l / (4.0 * kPi) * std::exp(-(k_dx * k_dx + k_dy * k_dy) * l * l / 4.0);
  }
  return h * h * l * l / (kPi * kPi * (1.0 + k_dx * k_dx * l * l) * (1.0 + k_dy * k_dy * l * l));
}

double sigma_spm(double theta, const BsdfParams& params, const WaveConfig& wave) {
  require_theta(theta);
  require_roughness(params.h, params.l);
  require_eps(params.eps_r);
  return spm_terms(from_theta(theta), params, wave).sigma;
}

double sigma_ka(double theta, const BsdfParams& params) {
  require_theta(theta);
  require_roughness(params.h, params.l);
  require_eps(params.eps_r);
  return ka_terms(from_theta(theta), params).sigma;
}

namespace {

SigmaGrad blend(Incidence in, const BsdfParams& params, const WaveConfig& wave) {
  require_roughness(params.h, params.l);
  require_eps(params.eps_r);
  if (!(params.tau >= 0.0 && params.tau <= 1.0)) {
    throw DomainError("tau must lie in [0, 1], got " + std::to_string(params.tau));
  }
  const auto spm = spm_terms(in, params, wave);
  const auto ka = ka_terms(in, params);
  const double t = params.tau;
  const double u = 1.0 - t;
  return {u * spm.sigma + t * ka.sigma, u * spm.d_h + t * ka.d_h, u * spm.d_l + t * ka.d_l,
          u * spm.d_eps + t * ka.d_eps, ka.sigma - spm.sigma};
}

}  // namespace

SigmaGrad bsdf_eval_cos(double cos_theta, const BsdfParams& params, const WaveConfig& wave) {
  require_cos(cos_theta);
  return blend(from_cos(cos_theta), params, wave);
}

SigmaGrad bsdf_eval(double theta, const BsdfParams& params, const WaveConfig& wave) {
  require_theta(theta);
  return blend(from_theta(theta), params, wave);
}

bool ValidityReport::violates(const std::string& name) const {
  return std::any_of(violated.begin(), violated.end(),
                     [&](const ValidityCondition& c) { return c.name == name; });
}

ValidityReport check_validity(const BsdfParams& p, double theta, const WaveConfig& wave,
                              const ValidityThresholds& thresholds) {
  const double k = wave.wavenumber;
  const double lambda = wave.wavelength;
  const double small = thresholds.much_less;
  ValidityReport report;

  auto less = [&](const char* name, double lhs, double rhs, bool& ok) {
    if (!(lhs < rhs)) {
      report.violated.push_back({name, lhs, rhs});
      ok = false;
    }
  };
  auto greater = [&](const char* name, double lhs, double rhs, bool& ok) {
    if (!(lhs > rhs)) {
      report.violated.push_back({name, lhs, rhs});
      ok = false;
    }
  };

  less("spm:kh<<1", k * p.h, small, report.spm_ok);
  less("spm:k3h2l<<1", k * k * k * p.h * p.h * p.l, small, report.spm_ok);
  less("spm:sqrt2h/l<0.3", std::sqrt(2.0) * p.h / p.l, 0.3, report.spm_ok);

  // Monostatic backscatter: |cos(theta_i) + cos(theta_s)| = 2 cos(theta).
  const double c = std::cos(theta);
  const double curvature_radius = p.l * p.l / (p.h * std::sqrt(24.0 / kPi));
  greater("ka:kl>6", k * p.l, 6.0, report.ka_ok);
  greater("ka:kh>sqrt10/(2cos)", k * p.h, std::sqrt(10.0) / (2.0 * c), report.ka_ok);
  greater("ka:Rc>lambda", curvature_radius, lambda, report.ka_ok);
  greater("ka:l2>2.76h*lambda", p.l * p.l, 2.76 * p.h * lambda, report.ka_ok);
  return report;
}

}  // namespace drtsar
