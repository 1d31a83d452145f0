#include "cmpstomo/corr.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/os.h>

#include "cmpstomo/error.hpp"

namespace cmpstomo {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view text, const std::string& what) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto* begin = t.data();
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        fail(ErrorKind::MalformedFile, "cannot parse " + what + " from '" + t + "'");
    }
    return v;
}

Index parse_index(std::string_view text, const std::string& what) {
    const std::string t = trim(text);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        fail(ErrorKind::MalformedFile, "cannot parse " + what + " from '" + t + "'");
    }
    return static_cast<Index>(v);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        const auto next = line.find(sep, pos);
        out.push_back(line.substr(pos, next == std::string_view::npos ? next : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::map<std::string, std::string> parse_header(const std::string& line) {
    if (line.rfind("#", 0) != 0) fail(ErrorKind::MalformedFile, "missing '#' header line");
    std::map<std::string, std::string> kv;
    std::istringstream in(line.substr(1));
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) fail(ErrorKind::MalformedFile, "bad header token '" + token + "'");
        kv[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return kv;
}

const std::string& header_value(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::MalformedFile, "header is missing '" + key + "'");
    return it->second;
}

Grid1D header_grid(const std::map<std::string, std::string>& kv) {
    Grid1D g{parse_double(header_value(kv, "grid_start"), "grid_start"),
             parse_double(header_value(kv, "grid_step"), "grid_step"),
             parse_index(header_value(kv, "grid_count"), "grid_count")};
    if (!(g.step > 0.0) || !std::isfinite(g.step) || !std::isfinite(g.start) || g.count < 1) {
        fail(ErrorKind::MalformedFile, "grid must be finite and strictly increasing");
    }
    return g;
}

// Maps a position back to its grid index; positions must sit on the grid.
int grid_index(const Grid1D& g, double x) {
    const double k = std::round((x - g.start) / g.step);
    if (k < 0 || k >= static_cast<double>(g.count) ||
        std::abs(g.position(static_cast<Index>(k)) - x) > 1e-9 * std::max({1.0, std::abs(x), g.step})) {
        fail(ErrorKind::MalformedFile, fmt::format("position {} is not on the grid", x));
    }
    return static_cast<int>(k);
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for reading");
    return in;
}

}  // namespace

void Grid1D::validate() const {
    if (!(step > 0.0) || !std::isfinite(step) || !std::isfinite(start) || count < 1) {
        fail(ErrorKind::InvalidArgument, "grid needs finite start, step > 0 and count >= 1");
    }
}

Grid1D parse_grid(const std::string& spec) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) fail(ErrorKind::InvalidArgument, "grid must be 'start:step:count'");
    try {
        Grid1D g{parse_double(parts[0], "grid start"), parse_double(parts[1], "grid step"),
                 parse_index(parts[2], "grid count")};
        g.validate();
        return g;
    } catch (const Error& e) {
        fail(ErrorKind::InvalidArgument, e.what());
    }
}

CorrTensor::CorrTensor(int order, Grid1D grid)
    : order_(order), grid_(grid), indexer_(order, grid.count) {
    grid_.validate();
    values_.assign(static_cast<std::size_t>(indexer_.size()), 0.0);
}

void CorrTensor::gaps_in_steps(std::span<const int> index, std::span<int> gaps) {
    for (std::size_t j = 0; j + 1 < index.size(); ++j) gaps[j] = index[j + 1] - index[j];
}

void ShotEnsemble::validate() const {
    grid.validate();
    if (shots.cols() != grid.count) {
        fail(ErrorKind::DimensionMismatch, "shot profiles must have one entry per grid point");
    }
    if (shots.rows() < 2) fail(ErrorKind::InvalidArgument, "a shot ensemble needs at least 2 shots");
    if (!shots.allFinite()) fail(ErrorKind::InvalidArgument, "shot phases must be finite");
}

CorrTensor estimate_correlator(const ShotEnsemble& ensemble, int order,
                               const EstimatorOptions& options) {
    if (order < 2 || order % 2 != 0) {
        fail(ErrorKind::OddOrderUnavailable,
             fmt::format("order {} is unavailable: only even orders cancel the random "
                         "per-shot global phase",
                         order));
    }
    if (order > options.max_order) {
        fail(ErrorKind::CostGuard,
             fmt::format("order {} exceeds the configured maximum {}", order, options.max_order));
    }
    ensemble.validate();
    const Index shots = ensemble.num_shots();
    if (shots < order) {
        fail(ErrorKind::InvalidArgument, "need at least as many shots as the correlator order");
    }

    CorrTensor out(order, ensemble.grid);
    out.shot_count = shots;
    std::vector<double> err(static_cast<std::size_t>(out.size()));
    const auto& theta = ensemble.shots;
    const double n = static_cast<double>(shots);

    auto idx = out.indexer().first();
    Index offset = 0;
    std::vector<const double*> cols(static_cast<std::size_t>(order));
    do {
        for (int j = 0; j < order; ++j) cols[static_cast<std::size_t>(j)] = theta.col(idx[static_cast<std::size_t>(j)]).data();
        double sum = 0.0, sum_sq = 0.0;
        for (Index s = 0; s < shots; ++s) {
            // Pairwise differences first, so a per-shot constant cancels
            // inside each pair before anything else is accumulated.
            double phase = 0.0;
            for (int p = 0; p < order; p += 2) {
                phase += cols[static_cast<std::size_t>(p)][s] - cols[static_cast<std::size_t>(p + 1)][s];
            }
            const double c = std::cos(phase);
            sum += c;
            sum_sq += c * c;
        }
        const double mean = sum / n;
        const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
        out.values()[static_cast<std::size_t>(offset)] = mean;
        err[static_cast<std::size_t>(offset)] = std::sqrt(var / n);
        ++offset;
    } while (out.indexer().next(idx));
    out.std_err() = std::move(err);
    return out;
}

Complex raw_phase_average(const ShotEnsemble& ensemble, std::span<const int> indices) {
    ensemble.validate();
    Complex acc(0.0, 0.0);
    for (Index s = 0; s < ensemble.num_shots(); ++s) {
        double phase = 0.0;
        for (std::size_t j = 0; j < indices.size(); ++j) {
            const double th = ensemble.shots(s, indices[j]);
            phase += (j % 2 == 0) ? th : -th;
        }
        acc += std::polar(1.0, phase);
    }
    return acc / static_cast<double>(ensemble.num_shots());
}

RelativeDeviation epsilon_metric(const CorrTensor& measured, const CorrTensor& reconstructed,
                                 double floor) {
    if (measured.order() != reconstructed.order() || !(measured.grid() == reconstructed.grid())) {
        fail(ErrorKind::DimensionMismatch, "tensors differ in order or grid");
    }
    RelativeDeviation out;
    double sum = 0.0;
    for (std::size_t i = 0; i < measured.values().size(); ++i) {
        const double rec = reconstructed.values()[i];
        if (std::abs(rec) < floor) {
            ++out.excluded;
            continue;
        }
        const double term = std::abs(measured.values()[i] - rec) / std::abs(rec);
        sum += term;
        out.max = std::max(out.max, term);
        ++out.included;
    }
    if (out.included == 0) {
        fail(ErrorKind::InvalidArgument, "every entry of the reconstruction is below the floor");
    }
    out.mean = sum / static_cast<double>(out.included);
    return out;
}

void write_corr(const std::filesystem::path& path, const CorrTensor& tensor) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
    const Grid1D& g = tensor.grid();
    fmt::print(f, "# order={} grid_start={:.17g} grid_step={:.17g} grid_count={} shots={}\n",
               tensor.order(), g.start, g.step, g.count, tensor.shot_count.value_or(0));
    auto idx = tensor.indexer().first();
    std::size_t offset = 0;
    fmt::memory_buffer buf;
    do {
        buf.clear();
        for (int j : idx) fmt::format_to(std::back_inserter(buf), "{:.17g},", g.position(j));
        fmt::format_to(std::back_inserter(buf), "{:.17g}", tensor.values()[offset]);
        if (tensor.std_err()) fmt::format_to(std::back_inserter(buf), ",{:.17g}", (*tensor.std_err())[offset]);
        buf.push_back('\n');
        std::fwrite(buf.data(), 1, buf.size(), f);
        ++offset;
    } while (tensor.indexer().next(idx));
    if (std::fclose(f) != 0) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

CorrTensor read_corr(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::MalformedFile, "empty correlator file");
    const auto kv = parse_header(line);
    const int order = static_cast<int>(parse_index(header_value(kv, "order"), "order"));
    if (order < 1) fail(ErrorKind::MalformedFile, "order must be positive");
    CorrTensor out(order, header_grid(kv));
    if (const auto it = kv.find("shots"); it != kv.end()) {
        const Index shots = parse_index(it->second, "shots");
        if (shots > 0) out.shot_count = shots;
    }

    std::vector<double> err;
    std::optional<bool> has_err;
    std::vector<int> idx(static_cast<std::size_t>(order));
    Index offset = 0;
    Index line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        const bool with_err = fields.size() == static_cast<std::size_t>(order) + 2;
        if (!with_err && fields.size() != static_cast<std::size_t>(order) + 1) {
            fail(ErrorKind::MalformedFile, fmt::format("line {}: expected {} or {} fields", line_no,
                                                       order + 1, order + 2));
        }
        if (has_err && *has_err != with_err) {
            fail(ErrorKind::MalformedFile, fmt::format("line {}: inconsistent stderr column", line_no));
        }
        has_err = with_err;
        for (int j = 0; j < order; ++j) {
            idx[static_cast<std::size_t>(j)] = grid_index(out.grid(), parse_double(fields[static_cast<std::size_t>(j)], "position"));
            if (j > 0 && idx[static_cast<std::size_t>(j)] < idx[static_cast<std::size_t>(j - 1)]) {
                fail(ErrorKind::SimplexViolation,
                     fmt::format("line {}: positions are not ascending", line_no));
            }
        }
        if (offset >= out.size() || out.indexer().rank(idx) != offset) {
            fail(ErrorKind::MalformedFile,
                 fmt::format("line {}: rows must follow lexicographic simplex order", line_no));
        }
        const double v = parse_double(fields[static_cast<std::size_t>(order)], "value");
        if (!std::isfinite(v)) fail(ErrorKind::MalformedFile, fmt::format("line {}: non-finite value", line_no));
        out.values()[static_cast<std::size_t>(offset)] = v;
        if (with_err) {
            const double e = parse_double(fields[static_cast<std::size_t>(order) + 1], "stderr");
            if (!std::isfinite(e)) fail(ErrorKind::MalformedFile, fmt::format("line {}: non-finite stderr", line_no));
            err.push_back(e);
        }
        ++offset;
    }
    if (offset != out.size()) {
        fail(ErrorKind::MalformedFile,
             fmt::format("expected {} simplex rows, found {}", out.size(), offset));
    }
    if (has_err.value_or(false)) out.std_err() = std::move(err);
    return out;
}

void write_shots(const std::filesystem::path& path, const ShotEnsemble& shots) {
    shots.validate();
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
    fmt::print(f, "# grid_start={:.17g} grid_step={:.17g} grid_count={}\n", shots.grid.start,
               shots.grid.step, shots.grid.count);
    fmt::memory_buffer buf;
    for (Index s = 0; s < shots.num_shots(); ++s) {
        buf.clear();
        for (Index i = 0; i < shots.grid.count; ++i) {
            if (i > 0) buf.push_back(',');
            fmt::format_to(std::back_inserter(buf), "{:.17g}", shots.shots(s, i));
        }
        buf.push_back('\n');
        std::fwrite(buf.data(), 1, buf.size(), f);
    }
    if (std::fclose(f) != 0) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

ShotEnsemble read_shots(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::MalformedFile, "empty shot file");
    ShotEnsemble out;
    out.grid = header_grid(parse_header(line));
    std::vector<double> flat;
    Index rows = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (static_cast<Index>(fields.size()) != out.grid.count) {
            fail(ErrorKind::MalformedFile,
                 fmt::format("shot {} has {} phases, grid has {}", rows + 1, fields.size(), out.grid.count));
        }
        for (const auto& f : fields) {
            const double v = parse_double(f, "phase");
            if (!std::isfinite(v)) fail(ErrorKind::MalformedFile, "non-finite phase");
            flat.push_back(v);
        }
        ++rows;
    }
    out.shots.resize(rows, out.grid.count);
    for (Index s = 0; s < rows; ++s)
        for (Index i = 0; i < out.grid.count; ++i)
            out.shots(s, i) = flat[static_cast<std::size_t>(s * out.grid.count + i)];
    if (rows < 2) fail(ErrorKind::MalformedFile, "a shot file needs at least 2 shots");
    return out;
}

}  // namespace cmpstomo
