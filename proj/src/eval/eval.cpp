#include "sttvc/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "sttvc/metrics.hpp"

namespace sttvc::eval {

namespace {

// ln(rate) ~ cubic in t = (quality - center) / scale.
struct CubicFit {
    Eigen::Vector4d coef;
    double center, scale;

    // Integral of the fit over quality in [lo, hi].
    double integral(double lo, double hi) const
    {
        auto antiderivative = [&](double q) {
            const double t = (q - center) / scale;
            return scale * (coef[0] * t + coef[1] * t * t / 2 + coef[2] * t * t * t / 3 + coef[3] * t * t * t * t / 4);
        };
        return antiderivative(hi) - antiderivative(lo);
    }
};

CubicFit fit(const RDCurve& c)
{
    const int n = static_cast<int>(c.size());
    double lo = c[0].quality, hi = c[0].quality, sum = 0.0;
    for (const auto& p : c) {
        lo = std::min(lo, p.quality);
        hi = std::max(hi, p.quality);
        sum += p.quality;
    }
    CubicFit f{Eigen::Vector4d::Zero(), sum / n, std::max(hi - lo, 1e-12) / 2};
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        const double t = (c[i].quality - f.center) / f.scale;
        a.row(i) << 1.0, t, t * t, t * t * t;
        b[i] = std::log(c[i].rate);
    }
    f.coef = a.colPivHouseholderQr().solve(b);
    return f;
}

void validate(const RDCurve& c, const char* which)
{
    if (c.size() < 4) throw BdRateError(std::string("bd_rate: ") + which + " curve needs at least 4 points");
    for (const auto& p : c)
        if (!(p.rate > 0.0) || !std::isfinite(p.rate) || !std::isfinite(p.quality))
            throw BdRateError(std::string("bd_rate: ") + which + " curve has a non-positive or non-finite point");
}

std::string type_name(FrameType t) { return t == FrameType::I ? "I" : "P"; }

}  // namespace

double bd_rate(const RDCurve& test, const RDCurve& anchor)
{
    validate(test, "test");
    validate(anchor, "anchor");
    auto range = [](const RDCurve& c) {
        auto [mn, mx] = std::minmax_element(c.begin(), c.end(),
                                            [](const RDPoint& a, const RDPoint& b) { return a.quality < b.quality; });
        return std::pair(mn->quality, mx->quality);
    };
    const auto [tlo, thi] = range(test);
    const auto [alo, ahi] = range(anchor);
    const double lo = std::max(tlo, alo), hi = std::min(thi, ahi);
    if (!(hi > lo)) throw BdRateError("bd_rate: quality ranges do not overlap");
    const double diff = (fit(test).integral(lo, hi) - fit(anchor).integral(lo, hi)) / (hi - lo);
    return (std::exp(diff) - 1.0) * 100.0;
}

std::vector<FrameMetrics> score_frames(const std::vector<Tensor>& source, const std::vector<Tensor>& decoded,
                                       bool msssim)
{
    if (source.size() < decoded.size()) throw std::invalid_argument("score_frames: fewer source than decoded frames");
    std::vector<FrameMetrics> out(decoded.size());
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        out[i].frame = static_cast<int>(i);
        out[i].psnr = metrics::psnr(source[i], decoded[i]);
        out[i].msssim = msssim ? metrics::ms_ssim(source[i], decoded[i]) : std::nan("");
    }
    return out;
}

SequenceResult run_codec_eval(const std::string& name, const CodecModel& model, double lambda,
                              const std::vector<Tensor>& frames, const EvalOptions& opt, IntraCodec& intra)
{
    if (frames.empty()) throw std::invalid_argument("run_codec_eval: empty sequence");
    std::vector<Tensor> use(frames.begin(), frames.begin() + std::min<std::size_t>(frames.size(), opt.frames));
    if (static_cast<int>(frames.size()) < opt.frames)
        std::cerr << "warning: " << name << " has " << frames.size() << " frames, " << opt.frames
                  << " requested; evaluating the available frames\n";

    SequenceResult r;
    r.sequence = name;
    r.lambda = lambda;
    r.height = use[0].dim(1);
    r.width = use[0].dim(2);
    r.encoded = encode_sequence(model, lambda, use, opt.coding, intra);
    r.frames = score_frames(use, r.encoded.recon, opt.msssim);
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
        r.frames[i].type = r.encoded.frames[i].type;
        r.frames[i].bytes = r.encoded.frames[i].bytes;
        (r.frames[i].type == FrameType::I ? r.i_frames : r.p_frames)++;
        r.psnr += r.frames[i].psnr;
        r.msssim += r.frames[i].msssim;
    }
    const double n = static_cast<double>(r.frames.size());
    r.psnr /= n;
    r.msssim /= n;
    r.container_bytes = r.encoded.container.byte_size();
    r.bpp = 8.0 * static_cast<double>(r.container_bytes) / (n * r.width * r.height);
    return r;
}

void write_frame_csv(std::ostream& out, const std::vector<SequenceResult>& results)
{
    out << "sequence,frame,type,bytes,psnr,msssim\n";
    out.precision(17);
    for (const auto& r : results)
        for (const auto& f : r.frames)
            out << r.sequence << ',' << f.frame << ',' << type_name(f.type) << ',' << f.bytes << ',' << f.psnr << ','
                << f.msssim << '\n';
}

void write_rd_csv(std::ostream& out, const std::vector<SequenceResult>& results)
{
    out << "sequence,lambda,bpp,psnr,msssim\n";
    out.precision(17);
    for (const auto& r : results)
        out << r.sequence << ',' << r.lambda << ',' << r.bpp << ',' << r.psnr << ',' << r.msssim << '\n';
}

std::vector<RDRow> read_rd_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
    }
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error(path + ": missing column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t cs = col("sequence"), cb = col("bpp"), cp = col("psnr");
    const auto it_l = std::find(header.begin(), header.end(), "lambda");
    const auto it_m = std::find(header.begin(), header.end(), "msssim");
    std::vector<RDRow> rows;
    for (int lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() < header.size()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": short row");
        RDRow r;
        r.sequence = cells[cs];
        r.bpp = std::stod(cells[cb]);
        r.psnr = std::stod(cells[cp]);
        if (it_l != header.end()) r.lambda = std::stod(cells[static_cast<std::size_t>(it_l - header.begin())]);
        r.msssim = it_m != header.end() ? std::stod(cells[static_cast<std::size_t>(it_m - header.begin())]) : std::nan("");
        rows.push_back(r);
    }
    return rows;
}

std::vector<std::pair<std::string, RDCurve>> curves_by_sequence(const std::vector<RDRow>& rows,
                                                                const std::string& metric)
{
    if (metric != "psnr" && metric != "msssim") throw std::invalid_argument("unknown metric " + metric);
    std::map<std::string, RDCurve> by;
    for (const auto& r : rows) by[r.sequence].push_back({r.bpp, metric == "psnr" ? r.psnr : r.msssim});
    std::vector<std::pair<std::string, RDCurve>> out;
    for (auto& [name, c] : by) {
        std::sort(c.begin(), c.end(), [](const RDPoint& a, const RDPoint& b) { return a.rate < b.rate; });
        out.emplace_back(name, c);
    }
    return out;
}

double average_bd_rate(const std::vector<RDRow>& test, const std::vector<RDRow>& anchor, const std::string& metric)
{
    const auto tc = curves_by_sequence(test, metric);
    const auto ac = curves_by_sequence(anchor, metric);
    std::map<std::string, RDCurve> amap(ac.begin(), ac.end());
    double sum = 0.0;
    int n = 0;
    for (const auto& [name, c] : tc) {
        const auto it = amap.find(name);
        if (it == amap.end()) continue;
        sum += bd_rate(c, it->second);
        ++n;
    }
    if (n == 0) throw BdRateError("bd_rate: no sequence appears in both files");
    return sum / n;
}

}  // namespace sttvc::eval
