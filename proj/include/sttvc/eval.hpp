#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sttvc/bitstream.hpp"

namespace sttvc::eval {

struct RDPoint {
    double rate = 0.0;     // bits per pixel
    double quality = 0.0;  // PSNR dB or MS-SSIM
};
using RDCurve = std::vector<RDPoint>;

class BdRateError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Bjontegaard delta rate of test against anchor in percent (negative means
// the test codec needs fewer bits). Cubic least-squares fit of ln(rate) over
// quality, integrated over the overlapping quality interval.
double bd_rate(const RDCurve& test, const RDCurve& anchor);

struct FrameMetrics {
    int frame = 0;
    FrameType type = FrameType::I;
    std::size_t bytes = 0;
    double psnr = 0.0;
    double msssim = 0.0;
};

struct SequenceResult {
    std::string sequence;
    double lambda = 0.0;
    int width = 0, height = 0;
    std::vector<FrameMetrics> frames;
    std::size_t container_bytes = 0;
    double bpp = 0.0;     // container bits / (frames * width * height)
    double psnr = 0.0;    // mean of per-frame values
    double msssim = 0.0;
    int i_frames = 0, p_frames = 0;
    EncodeResult encoded;
};

struct EvalOptions {
    CodingOptions coding;
    int frames = 96;
    bool msssim = true;
};

// Encodes up to opt.frames frames. Fewer available frames are evaluated as
// they are, with a warning on stderr.
SequenceResult run_codec_eval(const std::string& name, const CodecModel& model, double lambda,
                              const std::vector<Tensor>& frames, const EvalOptions& opt, IntraCodec& intra);
// Metrics of already decoded frames against the source.
std::vector<FrameMetrics> score_frames(const std::vector<Tensor>& source, const std::vector<Tensor>& decoded,
                                       bool msssim = true);

// sequence,frame,type,bytes,psnr,msssim
void write_frame_csv(std::ostream& out, const std::vector<SequenceResult>& results);
// sequence,lambda,bpp,psnr,msssim
void write_rd_csv(std::ostream& out, const std::vector<SequenceResult>& results);

struct RDRow {
    std::string sequence;
    double lambda = 0.0, bpp = 0.0, psnr = 0.0, msssim = 0.0;
};
std::vector<RDRow> read_rd_csv(const std::string& path);
// One curve per sequence, sorted by rate. metric is "psnr" or "msssim".
std::vector<std::pair<std::string, RDCurve>> curves_by_sequence(const std::vector<RDRow>& rows,
                                                                const std::string& metric);
// Mean of per-sequence BD-rates over the sequences both files share.
double average_bd_rate(const std::vector<RDRow>& test, const std::vector<RDRow>& anchor, const std::string& metric);

}  // namespace sttvc::eval
