#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/io.hpp"

namespace neuroalign::dsp {

using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

struct RecordingTrace {
  Eigen::VectorXd samples;
  double fs_hz = 0.0;
  std::string electrode_id;

  double duration_s() const { return samples.size() == 0 ? 0.0 : static_cast<double>(samples.size() - 1) / fs_hz; }
};

/// Direct-form II transposed second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

using SosFilter = std::vector<Biquad>;

/// Digital Butterworth band-pass of the given prototype order (2 * order poles),
/// designed by bilinear transform with pre-warped band edges. Unit gain at the
/// geometric band center.
SosFilter butterworth_bandpass(int order, double lo_hz, double hi_hz, double fs_hz);

std::complex<double> frequency_response(const SosFilter& filter, double f_hz, double fs_hz);

Eigen::VectorXd sosfilt(const SosFilter& filter, ConstVectorRef x);

/// Zero-phase forward-backward filtering with odd-reflection edge padding.
Eigen::VectorXd sosfiltfilt(const SosFilter& filter, ConstVectorRef x, Eigen::Index padlen);

/// Magnitude of the FFT-based analytic signal.
Eigen::VectorXd analytic_amplitude(ConstVectorRef x);

/// Rational resampling by up/down with a Kaiser-windowed sinc anti-alias filter.
/// Sample 0 stays aligned with time 0.
Eigen::VectorXd resample_poly(ConstVectorRef x, int up, int down);

/// High-gamma envelope: band-pass, analytic amplitude, anti-aliased resampling.
RecordingTrace highgamma_envelope(const RecordingTrace& trace, double band_lo_hz = 70.0, double band_hi_hz = 150.0,
                                  double out_fs_hz = 100.0);

/// Mean envelope over [center - w/2, center + w/2] per word, bounds inclusive.
Eigen::VectorXd word_responses(const RecordingTrace& envelope, std::span<const io::WordTiming> words,
                               double window_ms = 100.0);

struct PassageWindows {
  std::vector<std::int64_t> passage_ids;
  Eigen::VectorXd speech;  // mean over the first window_s after passage onset
  Eigen::VectorXd silence; // mean over the last window_s before the preceding silence ends
};

PassageWindows passage_window_means(const RecordingTrace& envelope, std::span<const io::WordTiming> words,
                                    double window_s = 1.0);

struct Responsiveness {
  double t_value = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
  bool responsive = false;
};

/// Paired speech-vs-silence t-test per electrode, Holm-corrected across electrodes.
std::vector<Responsiveness> responsiveness_test(std::span<const Eigen::VectorXd> speech,
                                                std::span<const Eigen::VectorXd> silence, double alpha = 0.05);

} // namespace neuroalign::dsp
