// Command-line front end: synthetic data, estimation, fitting, prediction
// and validation. Every command writes into --output and records the
// effective configuration next to its results.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/corr.hpp"
#include "cmpstomo/error.hpp"
#include "cmpstomo/m_fit.hpp"
#include "cmpstomo/predict.hpp"
#include "cmpstomo/shot_sim.hpp"
#include "cmpstomo/spectrum_fit.hpp"
#include "cmpstomo/synth.hpp"
#include "cmpstomo/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cmpstomo;

namespace {

struct Settings {
    std::string input;
    std::string output = ".";
    std::string spectrum;
    std::string model;
    std::string phase_model;
    std::string grid = "0:1:50";
    std::string orders;
    std::string gauge = "residues";
    std::string label;
    int order = 0;
    int d = 2;
    int m = 4;
    int n_starts = 100;
    int threads = 1;
    long shots = 1000;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    double sigma2 = 0.25;
    double xi = 10.0;
    double global_phase_spread = 0.0;
    double beta = 1.0;
    double gamma = 1.0;
    double min_decay = -1.0;
    bool complex_m = false;
    bool allow_order8 = false;
};

// One command-line flag that may also come from the --config file.
struct Binding {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> set;
    std::function<json()> get;
};

class Command {
public:
    Command(CLI::App& parent, const std::string& name, const std::string& description)
        : app_(parent.add_subcommand(name, description)) {
        app_->add_option("--config", config_path_, "JSON file with option values; flags override");
    }

    template <typename T>
    Command& bind(const std::string& key, T& target, const std::string& description) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        CLI::Option* opt;
        if constexpr (std::is_same_v<T, bool>) {
            opt = app_->add_flag(flag, target, description);
        } else {
            opt = app_->add_option(flag, target, description)->capture_default_str();
        }
        bindings_.push_back({key, opt, [&target](const json& j) { target = j.get<T>(); },
                             [&target] { return json(target); }});
        return *this;
    }

    CLI::App* app() const { return app_; }

    // Fills every flag not given on the command line from the config file.
    void apply_config() const {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in) fail(ErrorKind::IoError, "cannot open config '" + config_path_ + "'");
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            fail(ErrorKind::MalformedFile, "config '" + config_path_ + "': " + e.what());
        }
        if (!j.is_object()) fail(ErrorKind::MalformedFile, "config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            auto it = std::find_if(bindings_.begin(), bindings_.end(),
                                   [&](const Binding& b) { return b.key == key; });
            if (it == bindings_.end()) {
                fail(ErrorKind::InvalidArgument,
                     fmt::format("unknown config key '{}' for command '{}'", key, app_->get_name()));
            }
            if (it->option->count() > 0) continue;
            try {
                it->set(value);
            } catch (const json::exception&) {
                fail(ErrorKind::InvalidArgument, fmt::format("config key '{}' has the wrong type", key));
            }
        }
    }

    json effective() const {
        json j = json::object();
        for (const auto& b : bindings_) j[b.key] = b.get();
        return j;
    }

private:
    CLI::App* app_;
    std::string config_path_;
    std::vector<Binding> bindings_;
};

const char* g_command = "";

template <typename... Args>
void log_info(fmt::format_string<Args...> msg, Args&&... args) {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration<double>(now.time_since_epoch()).count();
    fmt::print(stderr, "ts={:.3f} level=info cmd={} msg=\"{}\"\n", secs, g_command,
               fmt::format(msg, std::forward<Args>(args)...));
}

std::vector<int> parse_orders(const Settings& s, std::vector<int> fallback) {
    std::vector<int> out;
    std::stringstream ss(s.orders);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            fail(ErrorKind::InvalidArgument, "cannot parse order '" + item + "'");
        }
    }
    if (s.order != 0) out.push_back(s.order);
    if (out.empty()) out = std::move(fallback);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    for (int n : out) check_prediction_order(n, {.allow_order8 = s.allow_order8});
    return out;
}

fs::path output_dir(const Settings& s) {
    const fs::path dir(s.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::IoError, "cannot create '" + dir.string() + "': " + ec.message());
    return dir;
}

std::string corr_name(int order) { return fmt::format("corr_n{}.csv", order); }

// A directory holding corr_n{order}.csv, or the file itself.
fs::path corr_path(const std::string& input, int order) {
    if (input.empty()) fail(ErrorKind::InvalidArgument, "--input is required");
    const fs::path p(input);
    return fs::is_directory(p) ? p / corr_name(order) : p;
}

CorrTensor load_corr(const std::string& input, int order) {
    CorrTensor t = read_corr(corr_path(input, order));
    if (t.order() != order) {
        fail(ErrorKind::DimensionMismatch,
             fmt::format("expected an order-{} tensor, file holds order {}", order, t.order()));
    }
    return t;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        fail(ErrorKind::MalformedFile, "'" + path.string() + "': " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorKind::IoError, "failed writing '" + path.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    out << text;
}

fs::path resolve(const std::string& explicit_path, const std::string& input, const char* name) {
    if (!explicit_path.empty()) return explicit_path;
    if (!input.empty() && fs::is_directory(input)) return fs::path(input) / name;
    fail(ErrorKind::InvalidArgument, fmt::format("cannot locate {}; pass it explicitly", name));
}

int hardware_threads(int requested) {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return std::clamp(requested, 1, hw);
}

ExpSumModel run_fit_spectrum(const Settings& s, const CorrTensor& c2) {
    SpectrumFitOptions opts;
    opts.m = s.m;
    opts.min_decay = s.min_decay;
    const ExpSumModel fit = fit_spectrum(c2, opts);
    for (const auto& w : fit.warnings) log_info("warning: {}", w);
    log_info("spectrum fitted: m={} residual={:.3e}", fit.order(), fit.residual);
    return fit;
}

MFitResult run_fit_m(const Settings& s, const ExpSumModel& spectrum, const CorrTensor& c2,
                     const CorrTensor& c4) {
    MFitProblem p;
    p.spectrum = spectrum;
    p.target2 = c2;
    p.target4 = c4;
    p.real_m = !s.complex_m;
    p.num_starts = s.n_starts;
    p.seed = s.seed;
    p.beta = s.beta;
    p.gamma = s.gamma;
    p.gauge = parse_gauge(s.gauge);
    p.threads = hardware_threads(s.threads);
    log_info("M fit: starts={} params={} threads={}", p.num_starts,
             MParametrization(spectrum, p.real_m, p.gauge).size(), p.threads);
    const MFitResult r = fit_m(p);
    log_info("M fit done: objective={:.3e} eps4={:.4f} eps2={:.4f} start={}", r.objective, r.eps4,
             r.eps2, r.start_index);
    return r;
}

ReconstructedModel make_model(const ExpSumModel& spectrum, const MFitResult& fit, const Grid1D& grid,
                              const json& config) {
    ReconstructedModel model;
    model.lambda = spectrum.lambda;
    model.m = fit.m;
    model.provenance = {{"spectrum", to_json(spectrum)},
                        {"m_fit", to_json(fit)},
                        {"grid", {{"start", grid.start}, {"step", grid.step}, {"count", grid.count}}},
                        {"config", config}};
    return model;
}

Grid1D model_grid(const Settings& s, const ReconstructedModel& model, bool grid_given) {
    if (grid_given || !model.provenance.contains("grid")) return parse_grid(s.grid);
    const auto& g = model.provenance["grid"];
    return Grid1D{g.at("start").get<double>(), g.at("step").get<double>(), g.at("count").get<Index>()};
}

std::vector<CorrTensor> load_measured(const std::string& input, const std::vector<int>& orders) {
    std::vector<CorrTensor> out;
    for (int n : orders) {
        const fs::path p = corr_path(input, n);
        if (fs::is_directory(input) && !fs::exists(p)) {
            log_info("no measured order-{} tensor at {}; skipped", n, p.string());
            continue;
        }
        out.push_back(load_corr(input, n));
    }
    if (out.empty()) fail(ErrorKind::InvalidArgument, "no measured tensors found in '" + input + "'");
    return out;
}

void emit_report(const fs::path& dir, const ValidationReport& report, const json& config) {
    json j = to_json(report);
    j["config"] = config;
    write_json(dir / "report.json", j);
    const std::string table = render_table({report});
    write_text(dir / "table.txt", table);
    write_projections(dir / "projections", report);
    fmt::print("{}", table);
}

// --- commands ---------------------------------------------------------------

void cmd_generate(const Settings& s, const json& config) {
    const Grid1D grid = parse_grid(s.grid);
    const auto orders = parse_orders(s, {2, 4, 6});
    const fs::path dir = output_dir(s);
    const GeneratedState gs = generate_state({.d = s.d, .seed = s.seed});
    log_info("state drawn after {} attempt(s)", gs.attempts);
    json state;
    to_json(state, gs.state);
    write_json(dir / "state.json", state);
    const auto spec = spectral_decompose(gs.state);
    const auto res = residues_in_diagonal_basis(gs.state, spec);
    ReconstructedModel truth{spec.eigenvalues, res.m, {{"config", config}, {"attempts", gs.attempts}}};
    write_json(dir / "truth_model.json", to_json(truth));
    for (int n : orders) {
        CorrTensor t = tabulate_exact(gs.state, n, grid);
        if (s.noise_sigma > 0.0) add_noise(t, s.noise_sigma, s.seed);
        write_corr(dir / corr_name(n), t);
        log_info("wrote {} ({} entries)", corr_name(n), t.size());
    }
}

void cmd_simulate_shots(const Settings& s, const json&) {
    const Grid1D grid = parse_grid(s.grid);
    PhaseFieldModel model;
    if (!s.phase_model.empty()) {
        model = phase_model_from_json(read_json(s.phase_model));
    } else {
        model.kernel = ExponentialKernel{s.sigma2, s.xi};
        model.global_phase_spread = s.global_phase_spread;
        model.seed = s.seed;
    }
    const fs::path dir = output_dir(s);
    const ShotEnsemble shots = sample_shots(model, grid, s.shots);
    write_shots(dir / "shots.csv", shots);
    write_json(dir / "phase_model.json", to_json(model));
    log_info("wrote {} shots on {} grid points", shots.num_shots(), grid.count);
}

void cmd_estimate(const Settings& s, const json&) {
    const auto orders = parse_orders(s, {2, 4, 6});
    fs::path in(s.input);
    if (fs::is_directory(in)) in /= "shots.csv";
    const ShotEnsemble shots = read_shots(in);
    const fs::path dir = output_dir(s);
    for (int n : orders) {
        const CorrTensor t = estimate_correlator(shots, n, {.max_order = s.allow_order8 ? 8 : 6});
        write_corr(dir / corr_name(n), t);
        log_info("estimated order {} from {} shots", n, shots.num_shots());
    }
}

void cmd_fit_spectrum(const Settings& s, const json& config) {
    const CorrTensor c2 = load_corr(s.input, 2);
    const fs::path dir = output_dir(s);
    json j = to_json(run_fit_spectrum(s, c2));
    j["config"] = config;
    write_json(dir / "spectrum.json", j);
}

void cmd_fit_m(const Settings& s, const json& config) {
    const ExpSumModel spectrum = exp_sum_from_json(read_json(resolve(s.spectrum, s.input, "spectrum.json")));
    const CorrTensor c2 = load_corr(s.input, 2);
    const CorrTensor c4 = load_corr(s.input, 4);
    const fs::path dir = output_dir(s);
    const MFitResult fit = run_fit_m(s, spectrum, c2, c4);
    write_json(dir / "model.json", to_json(make_model(spectrum, fit, c4.grid(), config)));
}

void cmd_predict(const Settings& s, const json&, bool grid_given) {
    const auto orders = parse_orders(s, {6});
    const ReconstructedModel model = reconstructed_from_json(read_json(resolve(s.model, s.input, "model.json")));
    const Grid1D grid = model_grid(s, model, grid_given);
    const fs::path dir = output_dir(s);
    for (int n : orders) {
        const CorrTensor t = predict(model, n, grid, {.allow_order8 = s.allow_order8});
        write_corr(dir / fmt::format("pred_n{}.csv", n), t);
        log_info("predicted order {} ({} entries)", n, t.size());
    }
}

void cmd_validate(const Settings& s, const json& config) {
    const auto orders = parse_orders(s, {2, 4, 6});
    const ReconstructedModel model = reconstructed_from_json(read_json(resolve(s.model, s.input, "model.json")));
    const auto measured = load_measured(s.input, orders);
    const fs::path dir = output_dir(s);
    const auto report = validation_report(model, measured, {.predict = {.allow_order8 = s.allow_order8}},
                                          s.label.empty() ? "model" : s.label);
    emit_report(dir, report, config);
}

void cmd_pipeline(const Settings& s, const json& config) {
    const auto orders = parse_orders(s, {6});
    const CorrTensor c2 = load_corr(s.input, 2);
    const CorrTensor c4 = load_corr(s.input, 4);
    const fs::path dir = output_dir(s);

    const ExpSumModel spectrum = run_fit_spectrum(s, c2);
    json sj = to_json(spectrum);
    sj["config"] = config;
    write_json(dir / "spectrum.json", sj);

    const MFitResult fit = run_fit_m(s, spectrum, c2, c4);
    const ReconstructedModel model = make_model(spectrum, fit, c4.grid(), config);
    write_json(dir / "model.json", to_json(model));

    std::vector<CorrTensor> measured{c2, c4};
    std::vector<CorrTensor> predicted{predict(model, 2, c2.grid()), predict(model, 4, c4.grid())};
    for (int n : orders) {
        if (n == 2 || n == 4) continue;
        predicted.push_back(predict(model, n, c4.grid(), {.allow_order8 = s.allow_order8}));
        write_corr(dir / fmt::format("pred_n{}.csv", n), predicted.back());
        const fs::path p = corr_path(s.input, n);
        if (fs::is_directory(s.input) && fs::exists(p)) {
            measured.push_back(load_corr(s.input, n));
        } else {
            predicted.pop_back();
            log_info("no measured order-{} tensor; prediction written but not scored", n);
        }
    }
    const auto report = compare_tensors(measured, predicted, {}, s.label.empty() ? "pipeline" : s.label);
    emit_report(dir, report, config);
}

void print_error(ErrorKind kind, const std::string& message, int code) {
    const json j = {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}, {"exit_code", code}}}};
    fmt::print("{}\n", j.dump());
    fmt::print(stderr, "level=error cmd={} kind={} msg=\"{}\"\n", g_command, to_string(kind), message);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tomography of continuous matrix product states from phase correlators"};
    app.require_subcommand(1);
    Settings s;

    Command generate(app, "generate", "random normalized state and its exact correlators");
    generate.bind("d", s.d, "bond dimension")
        .bind("seed", s.seed, "random seed")
        .bind("grid", s.grid, "grid as start:step:count")
        .bind("noise_sigma", s.noise_sigma, "additive Gaussian noise on every entry")
        .bind("orders", s.orders, "comma-separated even orders (default 2,4,6)")
        .bind("order", s.order, "single extra order")
        .bind("allow_order8", s.allow_order8, "permit order 8")
        .bind("output", s.output, "output directory");

    Command simulate(app, "simulate-shots", "synthetic single-shot phase profiles");
    simulate.bind("grid", s.grid, "grid as start:step:count")
        .bind("shots", s.shots, "number of shots")
        .bind("seed", s.seed, "random seed")
        .bind("sigma2", s.sigma2, "phase-field variance (rad^2)")
        .bind("xi", s.xi, "correlation length")
        .bind("global_phase_spread", s.global_phase_spread, "std. dev. of the per-shot offset (rad)")
        .bind("phase_model", s.phase_model, "phase-model JSON file (replaces the kernel flags)")
        .bind("output", s.output, "output directory");

    Command estimate(app, "estimate", "correlators from a shot ensemble");
    estimate.bind("input", s.input, "shots.csv or a directory holding it")
        .bind("orders", s.orders, "comma-separated even orders (default 2,4,6)")
        .bind("order", s.order, "single extra order")
        .bind("allow_order8", s.allow_order8, "permit order 8")
        .bind("output", s.output, "output directory");

    Command fit_spec(app, "fit-spectrum", "exponential-sum fit of the two-point function");
    fit_spec.bind("input", s.input, "corr_n2.csv or a directory holding it")
        .bind("m", s.m, "number of exponentials")
        .bind("min_decay", s.min_decay, "slowest decay allowed besides the pinned mode (negative: 1/window)")
        .bind("output", s.output, "output directory");

    Command fit_m_cmd(app, "fit-m", "multi-start fit of M against the four-point function");
    fit_m_cmd.bind("input", s.input, "directory with corr_n2.csv and corr_n4.csv")
        .bind("spectrum", s.spectrum, "spectrum.json (default: in --input)")
        .bind("n_starts", s.n_starts, "random starting points")
        .bind("seed", s.seed, "random seed")
        .bind("threads", s.threads, "worker threads")
        .bind("complex_m", s.complex_m, "fit a general complex M instead of the real form")
        .bind("gauge", s.gauge, "residues | first-row | corner")
        .bind("beta", s.beta, "weight of the two-point residue penalty")
        .bind("gamma", s.gamma, "weight of the normalization penalty")
        .bind("output", s.output, "output directory");

    Command predict_cmd(app, "predict", "correlators of a reconstructed model");
    predict_cmd.bind("input", s.input, "directory with model.json")
        .bind("model", s.model, "model.json (default: in --input)")
        .bind("grid", s.grid, "grid (default: the fit grid)")
        .bind("orders", s.orders, "comma-separated even orders (default 6)")
        .bind("order", s.order, "single extra order")
        .bind("allow_order8", s.allow_order8, "permit order 8")
        .bind("output", s.output, "output directory");

    Command validate(app, "validate", "error table and projections against measured tensors");
    validate.bind("input", s.input, "directory with measured corr_n{n}.csv")
        .bind("model", s.model, "model.json (default: in --input)")
        .bind("orders", s.orders, "comma-separated even orders (default 2,4,6)")
        .bind("order", s.order, "single extra order")
        .bind("label", s.label, "row label in the table")
        .bind("allow_order8", s.allow_order8, "permit order 8")
        .bind("output", s.output, "output directory");

    Command pipeline(app, "pipeline", "spectrum fit, M fit, prediction and validation");
    pipeline.bind("input", s.input, "directory with corr_n2.csv, corr_n4.csv (and corr_n6.csv)")
        .bind("m", s.m, "number of exponentials")
        .bind("min_decay", s.min_decay, "slowest decay allowed besides the pinned mode (negative: 1/window)")
        .bind("n_starts", s.n_starts, "random starting points")
        .bind("seed", s.seed, "random seed")
        .bind("threads", s.threads, "worker threads")
        .bind("complex_m", s.complex_m, "fit a general complex M instead of the real form")
        .bind("gauge", s.gauge, "residues | first-row | corner")
        .bind("beta", s.beta, "weight of the two-point residue penalty")
        .bind("gamma", s.gamma, "weight of the normalization penalty")
        .bind("orders", s.orders, "predicted orders (default 6)")
        .bind("order", s.order, "single extra order")
        .bind("allow_order8", s.allow_order8, "permit order 8")
        .bind("label", s.label, "row label in the table")
        .bind("output", s.output, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        g_command = "parse";
        print_error(ErrorKind::InvalidArgument, e.what(), exit_code_for(ErrorKind::InvalidArgument));
        return exit_code_for(ErrorKind::InvalidArgument);
    }

    const std::vector<std::pair<Command*, std::function<void(const Settings&, const json&)>>> commands{
        {&generate, cmd_generate},
        {&simulate, cmd_simulate_shots},
        {&estimate, cmd_estimate},
        {&fit_spec, cmd_fit_spectrum},
        {&fit_m_cmd, cmd_fit_m},
        {&predict_cmd,
         [&](const Settings& st, const json& c) {
             cmd_predict(st, c, predict_cmd.app()->get_option("--grid")->count() > 0);
         }},
        {&validate, cmd_validate},
        {&pipeline, cmd_pipeline},
    };
    for (const auto& [cmd, run] : commands) {
        if (!cmd->app()->parsed()) continue;
        const std::string name = cmd->app()->get_name();
        g_command = name.c_str();
        try {
            cmd->apply_config();
            json config = cmd->effective();
            config["command"] = name;
            log_info("start");
            run(s, config);
            log_info("done");
            return 0;
        } catch (const Error& e) {
            const int code = exit_code_for(e.kind());
            print_error(e.kind(), e.what(), code);
            return code;
        } catch (const json::exception& e) {
            print_error(ErrorKind::MalformedFile, e.what(), exit_code_for(ErrorKind::MalformedFile));
            return exit_code_for(ErrorKind::MalformedFile);
        } catch (const std::exception& e) {
            print_error(ErrorKind::InvalidArgument, e.what(), exit_code_for(ErrorKind::InvalidArgument));
            return exit_code_for(ErrorKind::InvalidArgument);
        }
    }
    return 2;
}
