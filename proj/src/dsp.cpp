#include "neuroalign/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "neuroalign/stats.hpp"

namespace neuroalign::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

std::pair<int, int> rational_ratio(double out_fs, double in_fs) {
  const auto up = static_cast<long long>(std::llround(out_fs * 1000.0));
  const auto down = static_cast<long long>(std::llround(in_fs * 1000.0));
  if (std::abs(static_cast<double>(up) - out_fs * 1000.0) > 1e-6 || std::abs(static_cast<double>(down) - in_fs * 1000.0) > 1e-6)
    throw ValidationError("sampling rates must be multiples of 1 mHz");
  const auto g = std::gcd(up, down);
  const long long p = up / g, q = down / g;
  if (p > 10000 || q > 10000) throw ValidationError("unsupported resampling ratio");
  return {static_cast<int>(p), static_cast<int>(q)};
}

double sample_eps(double fs) { return 1e-9 * std::max(1.0, fs); }

} // namespace

SosFilter butterworth_bandpass(int order, double lo_hz, double hi_hz, double fs_hz) {
  if (order < 1) throw ValidationError("filter order must be positive");
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0)) throw ValidationError("band outside Nyquist");

  const double two_fs = 2.0 * fs_hz;
  const double w_lo = two_fs * std::tan(kPi * lo_hz / fs_hz);
  const double w_hi = two_fs * std::tan(kPi * hi_hz / fs_hz);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  // Analog low-pass prototype poles, mapped to band-pass, then bilinear.
  std::vector<std::complex<double>> upper, real_poles;
  for (int k = 1; k <= order; ++k) {
    const std::complex<double> p = std::polar(1.0, kPi * (2.0 * k + order - 1.0) / (2.0 * order));
    const std::complex<double> pb = p * bw;
    const std::complex<double> disc = std::sqrt(pb * pb - 4.0 * w0_sq);
    for (const auto s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
      const std::complex<double> z = (two_fs + s) / (two_fs - s);
      if (std::abs(z.imag()) < 1e-12)
        real_poles.push_back({z.real(), 0.0});
      else if (z.imag() > 0.0)
        upper.push_back(z);
    }
  }

  SosFilter sos;
  for (const auto& z : upper) sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  std::sort(real_poles.begin(), real_poles.end(), [](auto a, auto b) { return a.real() < b.real(); });
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    const double r1 = real_poles[i].real(), r2 = real_poles[i + 1].real();
    sos.push_back({1.0, 0.0, -1.0, -(r1 + r2), r1 * r2});
  }
  if (real_poles.size() % 2 == 1) throw Error("unpaired real pole in band-pass design");

  const double center_hz = fs_hz / kPi * std::atan(std::sqrt(w0_sq) / two_fs);
  const double gain = std::abs(frequency_response(sos, center_hz, fs_hz));
  sos.front().b0 /= gain;
  sos.front().b1 /= gain;
  sos.front().b2 /= gain;
  return sos;
}

std::complex<double> frequency_response(const SosFilter& filter, double f_hz, double fs_hz) {
  const std::complex<double> zinv = std::polar(1.0, -2.0 * kPi * f_hz / fs_hz);
  std::complex<double> h = 1.0;
  for (const auto& s : filter) {
    const auto num = s.b0 + s.b1 * zinv + s.b2 * zinv * zinv;
    const auto den = 1.0 + s.a1 * zinv + s.a2 * zinv * zinv;
    h *= num / den;
  }
  return h;
}

Eigen::VectorXd sosfilt(const SosFilter& filter, ConstVectorRef x) {
  Eigen::VectorXd y = x;
  for (const auto& s : filter) {
    double z1 = 0.0, z2 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double in = y[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      y[i] = out;
    }
  }
  return y;
}

Eigen::VectorXd sosfiltfilt(const SosFilter& filter, ConstVectorRef x, Eigen::Index padlen) {
  const Eigen::Index n = x.size();
  if (n == 0) return {};
  padlen = std::clamp<Eigen::Index>(padlen, 0, n - 1);

  Eigen::VectorXd ext(n + 2 * padlen);
  for (Eigen::Index i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
    ext[n + padlen + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(padlen, n) = x;

  Eigen::VectorXd fwd = sosfilt(filter, ext);
  fwd.reverseInPlace();
  Eigen::VectorXd back = sosfilt(filter, fwd);
  back.reverseInPlace();
  return back.segment(padlen, n);
}

Eigen::VectorXd analytic_amplitude(ConstVectorRef x) {
  const Eigen::Index n = x.size();
  if (n == 0) return {};
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, in);
  // fwd on real input may return the half spectrum; expand to full length.
  spectrum.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = n / 2 + 1; k < n; ++k) spectrum[static_cast<std::size_t>(k)] = std::conj(spectrum[static_cast<std::size_t>(n - k)]);

  for (Eigen::Index k = 1; k < n; ++k) {
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    if (nyquist) continue;
    spectrum[static_cast<std::size_t>(k)] *= (k < (n + 1) / 2) ? 2.0 : 0.0;
  }
  std::vector<std::complex<double>> analytic;
  fft.inv(analytic, spectrum);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = std::abs(analytic[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd resample_poly(ConstVectorRef x, int up, int down) {
  if (up < 1 || down < 1) throw ValidationError("resampling factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return x;

  const int max_rate = std::max(up, down);
  const long half_len = 10L * max_rate;
  const double cutoff = 1.0 / max_rate;
  const double beta = 5.0;
  const long taps = 2 * half_len + 1;

  Eigen::VectorXd h(taps);
  for (long j = 0; j < taps; ++j) {
    const double m = static_cast<double>(j - half_len);
    const double arg = cutoff * m;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
    const double ratio = 2.0 * static_cast<double>(j) / static_cast<double>(taps - 1) - 1.0;
    const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - ratio * ratio)) / std::cyl_bessel_i(0.0, beta);
    h[j] = cutoff * sinc * window;
  }
  h *= static_cast<double>(up) / h.sum();

  const long n = static_cast<long>(x.size());
  const long n_out = (n * up + down - 1) / down;
  Eigen::VectorXd y(n_out);
  for (long m = 0; m < n_out; ++m) {
    const long center = m * down + half_len;
    long k_lo = center - 2 * half_len;
    k_lo = k_lo <= 0 ? 0 : (k_lo + up - 1) / up;
    const long k_hi = std::min(n - 1, center / up);
    double acc = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) acc += h[center - k * up] * x[k];
    y[m] = acc;
  }
  return y;
}

RecordingTrace highgamma_envelope(const RecordingTrace& trace, double band_lo_hz, double band_hi_hz, double out_fs_hz) {
  if (trace.samples.size() == 0) throw ValidationError("empty trace");
  if (!(trace.fs_hz > 0.0)) throw ValidationError("sampling rate must be positive");
  if (!(trace.fs_hz > 2.0 * band_hi_hz)) throw ValidationError("band outside Nyquist");
  if (!(out_fs_hz > 0.0 && out_fs_hz <= trace.fs_hz)) throw ValidationError("output rate must be in (0, fs]");
  if (!trace.samples.allFinite()) throw ValidationError("trace contains non-finite samples");

  const auto filter = butterworth_bandpass(4, band_lo_hz, band_hi_hz, trace.fs_hz);
  const auto padlen = static_cast<Eigen::Index>(std::ceil(10.0 * trace.fs_hz / band_lo_hz));
  const Eigen::VectorXd band = sosfiltfilt(filter, trace.samples, padlen);
  const Eigen::VectorXd amplitude = analytic_amplitude(band);

  const auto [up, down] = rational_ratio(out_fs_hz, trace.fs_hz);
  RecordingTrace out;
  out.samples = resample_poly(amplitude, up, down).cwiseMax(0.0);
  out.fs_hz = out_fs_hz;
  out.electrode_id = trace.electrode_id;
  return out;
}

Eigen::VectorXd word_responses(const RecordingTrace& envelope, std::span<const io::WordTiming> words, double window_ms) {
  if (!(window_ms > 0.0)) throw ValidationError("window must be positive");
  const double fs = envelope.fs_hz;
  const double half = window_ms / 2000.0;
  const double eps = sample_eps(fs);
  const auto n = envelope.samples.size();

  Eigen::VectorXd out(static_cast<Eigen::Index>(words.size()));
  for (std::size_t w = 0; w < words.size(); ++w) {
    const double lo = words[w].center_s - half;
    const double hi = words[w].center_s + half;
    const double lo_idx = lo * fs, hi_idx = hi * fs;
    if (lo_idx < -eps || hi_idx > static_cast<double>(n - 1) + eps)
      throw Error("window for word " + std::to_string(words[w].word_id) + " extends beyond the recording");
    const auto first = static_cast<Eigen::Index>(std::ceil(lo_idx - eps));
    const auto last = static_cast<Eigen::Index>(std::floor(hi_idx + eps));
    out[static_cast<Eigen::Index>(w)] = envelope.samples.segment(first, last - first + 1).mean();
  }
  return out;
}

PassageWindows passage_window_means(const RecordingTrace& envelope, std::span<const io::WordTiming> words,
                                    double window_s) {
  std::map<std::int64_t, const io::WordTiming*> first_word;
  for (const auto& w : words) first_word.try_emplace(w.passage_id, &w);

  const double fs = envelope.fs_hz;
  const double eps = sample_eps(fs);
  const auto n = envelope.samples.size();
  // Half-open [start, start + window): exactly window * fs samples.
  auto window_mean = [&](double start_s, std::int64_t passage) {
    const auto first = static_cast<Eigen::Index>(std::ceil(start_s * fs - eps));
    const auto count = static_cast<Eigen::Index>(std::llround(window_s * fs));
    if (first < 0 || count < 1 || first + count > n)
      throw Error("responsiveness window for passage " + std::to_string(passage) + " lies outside the recording");
    return envelope.samples.segment(first, count).mean();
  };

  PassageWindows out;
  out.speech.resize(static_cast<Eigen::Index>(first_word.size()));
  out.silence.resize(static_cast<Eigen::Index>(first_word.size()));
  Eigen::Index i = 0;
  for (const auto& [passage, w] : first_word) {
    out.passage_ids.push_back(passage);
    out.speech[i] = window_mean(w->passage_onset_s, passage);
    out.silence[i] = window_mean(w->preceding_silence_end_s - window_s, passage);
    ++i;
  }
  return out;
}

std::vector<Responsiveness> responsiveness_test(std::span<const Eigen::VectorXd> speech,
                                                std::span<const Eigen::VectorXd> silence, double alpha) {
  if (speech.size() != silence.size()) throw ValidationError("speech and silence electrode counts differ");
  std::vector<Responsiveness> out(speech.size());
  Eigen::VectorXd raw(static_cast<Eigen::Index>(speech.size()));
  for (std::size_t e = 0; e < speech.size(); ++e) {
    if (speech[e].size() != silence[e].size()) throw ValidationError("unequal pair counts");
    if (speech[e].size() < 2) throw ValidationError("responsiveness test needs at least 2 passages");
    const auto t = stats::paired_t_test(speech[e], silence[e]);
    out[e].t_value = t.t;
    out[e].p_value = t.p;
    raw[static_cast<Eigen::Index>(e)] = t.p;
  }
  const auto holm = stats::holm_correct(raw, alpha);
  for (std::size_t e = 0; e < out.size(); ++e) {
    out[e].p_adjusted = holm.adjusted[static_cast<Eigen::Index>(e)];
    out[e].responsive = holm.reject[e];
  }
  return out;
}

} // namespace neuroalign::dsp
