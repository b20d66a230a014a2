#include "mptc/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "mptc/errors.hpp"
#include "mptc/metrics.hpp"

namespace mptc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_atomically(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw IoError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

json denoiser_to_json(const DenoiserSpec& d) {
    json j{{"kind", to_string(d.kind)},
           {"sigma", d.sigma},
           {"persistent_bridge", d.persistent_bridge},
           {"bridge_timeout_seconds", d.bridge_timeout_seconds},
           {"tv_iterations", d.tv_iterations},
           {"bm3d",
            {{"block_size", d.bm3d.block_size},
             {"search_radius", d.bm3d.search_radius},
             {"max_group_size", d.bm3d.max_group_size},
             {"step", d.bm3d.step},
             {"lambda", d.bm3d.lambda},
             {"wiener", d.bm3d.wiener}}}};
    j["endpoint"] = d.endpoint ? json(*d.endpoint) : json(nullptr);
    return j;
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

DenoiserSpec denoiser_from_json(const json& j, DenoiserSpec d) {
    if (auto it = j.find("kind"); it != j.end()) d.kind = parse_denoiser_kind(it->get<std::string>());
    take(j, "sigma", d.sigma);
    take(j, "persistent_bridge", d.persistent_bridge);
    take(j, "bridge_timeout_seconds", d.bridge_timeout_seconds);
    take(j, "tv_iterations", d.tv_iterations);
    if (auto it = j.find("endpoint"); it != j.end()) {
        d.endpoint = it->is_null() ? std::nullopt : std::optional<std::string>(it->get<std::string>());
    }
    if (auto it = j.find("bm3d"); it != j.end()) {
        take(*it, "block_size", d.bm3d.block_size);
        take(*it, "search_radius", d.bm3d.search_radius);
        take(*it, "max_group_size", d.bm3d.max_group_size);
        take(*it, "step", d.bm3d.step);
        take(*it, "lambda", d.bm3d.lambda);
        take(*it, "wiener", d.bm3d.wiener);
    }
    return d;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string optional_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string{}; }

DatasetSample load_manifest_sample(const RunManifest& m) {
    return load_sample(m.inputs, m.kind, m.sample_name);
}

// Appends rows to a CSV, creating it with `header` when missing, and tracks
// the keys (values of `key_columns`) of rows already present.
class CsvAppender {
 public:
    CsvAppender(fs::path path, const std::string& header, std::vector<std::size_t> key_columns)
        : path_(std::move(path)), key_columns_(std::move(key_columns)) {
        if (fs::exists(path_)) {
            std::ifstream in(path_);
            std::string line;
            if (!std::getline(in, line) || line != header) {
                throw InvalidArgument(path_.string() + " exists with a different header");
            }
            while (std::getline(in, line)) {
                if (!line.empty()) existing_.insert(key_of_row(split_csv(line)));
            }
        } else {
            write_text_atomically(path_, header + "\n");
        }
    }

    [[nodiscard]] bool has(const std::vector<std::string>& key) const { return existing_.count(join(key)) != 0; }

    void append(const std::vector<std::string>& fields) {
        std::lock_guard lock(mutex_);
        std::ofstream out(path_, std::ios::app);
        if (!out) throw IoError("cannot append to " + path_.string());
        for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_field(fields[i]);
        out << "\n";
        out.flush();
        if (!out) throw IoError("short write to " + path_.string());
        existing_.insert(key_of_row(fields));
    }

 private:
    static std::string join(const std::vector<std::string>& key) {
        std::string k;
        for (const auto& f : key) k += f + '\x1f';
        return k;
    }

    std::string key_of_row(const std::vector<std::string>& fields) const {
        std::vector<std::string> key;
        for (std::size_t c : key_columns_) key.push_back(c < fields.size() ? fields[c] : std::string{});
        return join(key);
    }

    fs::path path_;
    std::vector<std::size_t> key_columns_;
    std::set<std::string> existing_;
    std::mutex mutex_;
};

// Runs jobs 0..n-1 on up to `workers` threads; the first exception is rethrown.
template <typename Fn>
void run_jobs(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

Tensor3 normalize(const Tensor3& t, double peak) {
    if (!(peak > 0.0)) throw InvalidArgument("peak must be positive");
    Tensor3 out = t;
    for (double& v : out.data()) v /= peak;
    return out;
}

Tensor3 denormalize(const Tensor3& t, double peak) {
    Tensor3 out = t;
    out *= peak;
    return out;
}

std::string to_string(InnerOptimizerKind kind) { return kind == InnerOptimizerKind::Adam ? "adam" : "gd"; }

InnerOptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "gd" || name == "gradient-descent") return InnerOptimizerKind::GradientDescent;
    if (name == "adam") return InnerOptimizerKind::Adam;
    throw InvalidArgument("unknown optimizer '" + name + "'");
}

std::string to_string(TransformG::Mode mode) {
    return mode == TransformG::Mode::LearnableLinear ? "learnable-linear" : "identity";
}

TransformG::Mode parse_transform_mode(const std::string& name) {
    if (name == "identity") return TransformG::Mode::Identity;
    if (name == "learnable-linear" || name == "linear") return TransformG::Mode::LearnableLinear;
    throw InvalidArgument("unknown transform '" + name + "'");
}

json config_to_json(const SolverConfig& cfg) {
    return json{{"outer_iterations", cfg.outer_iterations},
                {"inner_iterations", cfg.inner.steps},
                {"tolerance", cfg.tolerance},
                {"rank", cfg.rank},
                {"rho", cfg.rho},
                {"psi", cfg.psi},
                {"sigma1", cfg.sigma1},
                {"sigma2", cfg.sigma2},
                {"ptv_weight", cfg.inner.ptv_weight},
                {"l1_epsilon", cfg.inner.l1_epsilon},
                {"learning_rate", cfg.inner.learning_rate},
                {"optimizer", to_string(cfg.inner.optimizer)},
                {"adam_beta1", cfg.inner.adam_beta1},
                {"adam_beta2", cfg.inner.adam_beta2},
                {"adam_epsilon", cfg.inner.adam_epsilon},
                {"transform", to_string(cfg.transform)},
                {"local", denoiser_to_json(cfg.local)},
                {"nonlocal", denoiser_to_json(cfg.nonlocal)},
                {"enable_local", cfg.enable_local},
                {"enable_nonlocal", cfg.enable_nonlocal},
                {"clamp_observed", cfg.clamp_observed},
                {"seed", cfg.seed}};
}

SolverConfig config_from_json(const json& j, SolverConfig cfg) {
    if (!j.is_object()) throw InvalidArgument("solver config overrides must be a JSON object");
    static const std::set<std::string> known{
        "outer_iterations", "inner_iterations", "tolerance",    "rank",       "rho",          "psi",
        "sigma1",           "sigma2",           "ptv_weight",   "l1_epsilon", "learning_rate", "optimizer",
        "adam_beta1",       "adam_beta2",       "adam_epsilon", "transform",  "local",        "nonlocal",
        "enable_local",     "enable_nonlocal",  "clamp_observed", "seed"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw InvalidArgument("unknown solver config field '" + key + "'");
    }
    take(j, "outer_iterations", cfg.outer_iterations);
    take(j, "inner_iterations", cfg.inner.steps);
    take(j, "tolerance", cfg.tolerance);
    take(j, "rank", cfg.rank);
    take(j, "rho", cfg.rho);
    take(j, "psi", cfg.psi);
    take(j, "sigma1", cfg.sigma1);
    take(j, "sigma2", cfg.sigma2);
    take(j, "ptv_weight", cfg.inner.ptv_weight);
    take(j, "l1_epsilon", cfg.inner.l1_epsilon);
    take(j, "learning_rate", cfg.inner.learning_rate);
    if (auto it = j.find("optimizer"); it != j.end()) cfg.inner.optimizer = parse_optimizer_kind(it->get<std::string>());
    take(j, "adam_beta1", cfg.inner.adam_beta1);
    take(j, "adam_beta2", cfg.inner.adam_beta2);
    take(j, "adam_epsilon", cfg.inner.adam_epsilon);
    if (auto it = j.find("transform"); it != j.end()) cfg.transform = parse_transform_mode(it->get<std::string>());
    if (auto it = j.find("local"); it != j.end()) cfg.local = denoiser_from_json(*it, cfg.local);
    if (auto it = j.find("nonlocal"); it != j.end()) cfg.nonlocal = denoiser_from_json(*it, cfg.nonlocal);
    take(j, "enable_local", cfg.enable_local);
    take(j, "enable_nonlocal", cfg.enable_nonlocal);
    take(j, "clamp_observed", cfg.clamp_observed);
    take(j, "seed", cfg.seed);
    return cfg;
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::RemoveLocal: return "remove-local";
        case Ablation::RemoveNonlocal: return "remove-nonlocal";
        case Ablation::RemoveBoth: return "remove-both";
    }
    return "unknown";
}

Ablation parse_ablation(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "remove-local" || name == "remove-cnn") return Ablation::RemoveLocal;
    if (name == "remove-nonlocal" || name == "remove-bm3d") return Ablation::RemoveNonlocal;
    if (name == "remove-both") return Ablation::RemoveBoth;
    throw InvalidArgument("unknown ablation '" + name + "'");
}

SolverConfig apply_ablation(SolverConfig cfg, Ablation a) {
    cfg.enable_local = a == Ablation::Full || a == Ablation::RemoveNonlocal;
    cfg.enable_nonlocal = a == Ablation::Full || a == Ablation::RemoveLocal;
    return cfg;
}

void RunManifest::validate() const {
    if (inputs.empty()) throw InvalidArgument("manifest lists no input files");
    if (sampling_rates.empty()) throw InvalidArgument("manifest SR list is empty");
    for (double sr : sampling_rates) {
        if (!(sr > 0.0 && sr <= 1.0)) throw BadRate("sampling rate must lie in (0, 1], got " + csv_number(sr));
    }
    if (seeds.empty()) throw InvalidArgument("manifest seed list is empty");
    if (ablations.empty()) throw InvalidArgument("manifest selects no ablation configurations");
    if (workers == 0) throw InvalidArgument("worker count must be >= 1");
    for (double s : sigma1_values)
        if (!(s >= 0.0)) throw InvalidArgument("sigma1 overrides must be >= 0");
    for (double s : sigma2_values)
        if (!(s >= 0.0)) throw InvalidArgument("sigma2 overrides must be >= 0");
    config.validate();
}

json RunManifest::to_json() const {
    json j;
    j["sample"] = {{"name", sample_name}, {"kind", to_string(kind)}};
    j["sample"]["inputs"] = json::array();
    for (const auto& p : inputs) j["sample"]["inputs"].push_back(p.string());
    j["sampling_rates"] = sampling_rates;
    j["seeds"] = seeds;
    j["config"] = config_to_json(config);
    j["sigma1_values"] = sigma1_values;
    j["sigma2_values"] = sigma2_values;
    j["ablations"] = json::array();
    for (Ablation a : ablations) j["ablations"].push_back(to_string(a));
    j["output_dir"] = output_dir.string();
    j["workers"] = workers;
    j["trace"] = trace;
    return j;
}

RunManifest RunManifest::from_json(const json& j, const fs::path& base_dir) {
    RunManifest m;
    const json& sample = j.at("sample");
    take(sample, "name", m.sample_name);
    if (auto it = sample.find("kind"); it != sample.end()) m.kind = parse_dataset_kind(it->get<std::string>());
    for (const auto& p : sample.at("inputs")) {
        fs::path path = p.get<std::string>();
        m.inputs.push_back(path.is_relative() && !base_dir.empty() ? base_dir / path : path);
    }
    m.sampling_rates = j.at("sampling_rates").get<std::vector<double>>();
    take(j, "seeds", m.seeds);
    if (auto it = j.find("config"); it != j.end()) m.config = config_from_json(*it);
    take(j, "sigma1_values", m.sigma1_values);
    take(j, "sigma2_values", m.sigma2_values);
    if (auto it = j.find("ablations"); it != j.end()) {
        m.ablations.clear();
        for (const auto& a : *it) m.ablations.push_back(parse_ablation(a.get<std::string>()));
    }
    if (auto it = j.find("output_dir"); it != j.end()) {
        fs::path out = it->get<std::string>();
        m.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    }
    take(j, "workers", m.workers);
    take(j, "trace", m.trace);
    m.validate();
    return m;
}

RunManifest RunManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument("manifest " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

CompletionResult complete_sample(const DatasetSample& sample, double sr, std::uint64_t seed, const SolverConfig& cfg,
                                 bool trace, const std::optional<MaskTensor>& mask) {
    const Shape s = sample.tensor.shape();
    CompletionResult out;
    out.mask = mask ? *mask : gen_mask(s.height, s.width, s.channels, sr, seed);
    require_same_shape(out.mask.shape(), s, "mask");
    const Tensor3 truth = normalize(sample.tensor, sample.peak);
    const Tensor3 observed = apply_mask(truth, out.mask);
    const MetricContext unit{.peak = 1.0};
    out.observed_psnr = psnr(observed, truth, unit);

    AdmmSolver solver(cfg);
    out.report = solver.run(observed, out.mask, trace ? TraceReference{&truth} : TraceReference{});
    out.psnr = psnr(out.report.x, truth, unit);
    out.ssim = s.height >= unit.window && s.width >= unit.window ? ssim(out.report.x, truth, unit)
                                                                 : std::numeric_limits<double>::quiet_NaN();
    return out;
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_history_csv(const std::vector<IterationRecord>& history, const fs::path& path) {
    std::ostringstream out;
    out << "iteration,rel_change,loss,psnr_x,ssim_x,psnr_y,ssim_y\n";
    for (const auto& r : history) {
        out << r.iteration << ',' << csv_number(r.rel_change) << ',' << csv_number(r.loss) << ','
            << optional_number(r.psnr_x) << ',' << optional_number(r.ssim_x) << ',' << optional_number(r.psnr_y)
            << ',' << optional_number(r.ssim_y) << '\n';
    }
    write_text_atomically(path, out.str());
}

CompleteOutputs cmd_complete(const CompleteArgs& args, std::ostream& log) {
    args.config.validate();
    DatasetSample sample = load_sample(args.inputs, args.kind, args.name);
    std::optional<MaskTensor> mask;
    if (args.mask_file) mask = MaskTensor::from_tensor(load_raw(*args.mask_file).tensor);
    if (!fs::is_directory(args.output_dir)) throw IoError("output directory " + args.output_dir.string() + " does not exist");

    CompleteOutputs out;
    out.result = complete_sample(sample, args.sr, args.mask_seed, args.config, args.trace, mask);
    const CompletionResult& r = out.result;

    out.reconstruction = args.output_dir / (sample.name + "_x.tns");
    out.history = args.output_dir / (sample.name + "_history.csv");
    save_raw(denormalize(r.report.x, sample.peak), out.reconstruction);
    write_history_csv(r.report.history, out.history);
    if (args.write_png && (sample.tensor.channels() == 1 || sample.tensor.channels() == 3)) {
        out.png = args.output_dir / (sample.name + "_x.png");
        write_png(denormalize(r.report.x, sample.peak), *out.png, sample.peak > 256.0 ? 16 : 8);
    }

    std::ostringstream summary;
    summary << "name=" << sample.name << " sr=" << csv_number(r.mask.sampling_rate()) << " seed=" << args.mask_seed
            << " mask=" << hex64(r.mask.checksum()) << " observed_psnr=" << csv_number(r.observed_psnr)
            << " psnr=" << csv_number(r.psnr) << " ssim=" << csv_number(r.ssim)
            << " iterations=" << r.report.iterations << " seconds=" << csv_number(r.report.seconds)
            << " config=" << config_to_json(args.config).dump();
    out.summary = summary.str();
    log << out.summary << "\n";
    return out;
}

fs::path cmd_ablate(const RunManifest& m, std::ostream& log) {
    m.validate();
    const DatasetSample sample = load_manifest_sample(m);
    fs::create_directories(m.output_dir);
    const fs::path csv = m.output_dir / "ablation.csv";
    const std::string header = std::string(kCsvBaseHeader) +
                               ",ablation,enable_local,enable_nonlocal,mask_checksum,observed_psnr,local_calls,"
                               "nonlocal_calls,config";
    CsvAppender table(csv, header, {0, 1, 2, 7});  // name, sr, seed, ablation

    struct Job {
        double sr;
        std::uint64_t seed;
        Ablation ablation;
    };
    std::vector<Job> jobs;
    for (double sr : m.sampling_rates)
        for (std::uint64_t seed : m.seeds)
            for (Ablation a : m.ablations) jobs.push_back({sr, seed, a});

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!table.has({sample.name, csv_number(jobs[i].sr), std::to_string(jobs[i].seed), to_string(jobs[i].ablation)}))
            todo.push_back(i);
    }
    if (todo.size() < jobs.size()) log << "ablate: " << jobs.size() - todo.size() << " rows already present\n";

    std::mutex log_mutex;
    run_jobs(todo.size(), m.workers, [&](std::size_t t) {
        const Job& job = jobs[todo[t]];
        const SolverConfig cfg = apply_ablation(m.config, job.ablation);
        const CompletionResult r = complete_sample(sample, job.sr, job.seed, cfg, false);
        std::vector<std::string> row{sample.name,
                                     csv_number(job.sr),
                                     std::to_string(job.seed),
                                     csv_number(r.psnr),
                                     csv_number(r.ssim),
                                     std::to_string(r.report.iterations),
                                     csv_number(r.report.seconds),
                                     to_string(job.ablation),
                                     cfg.enable_local ? "1" : "0",
                                     cfg.enable_nonlocal ? "1" : "0",
                                     hex64(r.mask.checksum()),
                                     csv_number(r.observed_psnr),
                                     std::to_string(r.report.local_calls),
                                     std::to_string(r.report.nonlocal_calls),
                                     config_to_json(cfg).dump()};
        table.append(row);
        std::lock_guard lock(log_mutex);
        log << "ablate " << to_string(job.ablation) << " sr=" << csv_number(job.sr) << " seed=" << job.seed
            << " psnr=" << csv_number(r.psnr) << "\n";
    });
    return csv;
}

fs::path cmd_sweep(const RunManifest& m, std::ostream& log) {
    m.validate();
    const DatasetSample sample = load_manifest_sample(m);
    fs::create_directories(m.output_dir);
    const fs::path csv = m.output_dir / "sweep.csv";
    const std::string header =
        std::string(kCsvBaseHeader) + ",sigma1,sigma2,mask_checksum,observed_psnr,config";
    CsvAppender table(csv, header, {0, 1, 2, 7, 8});  // name, sr, seed, sigma1, sigma2

    const std::vector<double> s1 = m.sigma1_values.empty() ? std::vector<double>{m.config.sigma1} : m.sigma1_values;
    const std::vector<double> s2 = m.sigma2_values.empty() ? std::vector<double>{m.config.sigma2} : m.sigma2_values;

    struct Job {
        double sr;
        std::uint64_t seed;
        double sigma1;
        double sigma2;
        std::vector<std::string> key;
    };
    std::vector<Job> jobs;
    for (double sr : m.sampling_rates)
        for (std::uint64_t seed : m.seeds)
            for (double a : s1)
                for (double b : s2) {
                    jobs.push_back({sr, seed, a, b,
                                    {sample.name, csv_number(sr), std::to_string(seed), csv_number(a), csv_number(b)}});
                }

    std::vector<std::size_t> todo;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (table.has(jobs[i].key)) ++skipped;
        else todo.push_back(i);
    }
    if (skipped) log << "sweep: " << skipped << " of " << jobs.size() << " rows already present\n";

    std::mutex log_mutex;
    run_jobs(todo.size(), m.workers, [&](std::size_t t) {
        const Job& job = jobs[todo[t]];
        SolverConfig cfg = m.config;
        cfg.sigma1 = job.sigma1;
        cfg.sigma2 = job.sigma2;
        const CompletionResult r = complete_sample(sample, job.sr, job.seed, cfg, false);
        table.append({sample.name, csv_number(job.sr), std::to_string(job.seed), csv_number(r.psnr),
                      csv_number(r.ssim), std::to_string(r.report.iterations), csv_number(r.report.seconds),
                      csv_number(job.sigma1), csv_number(job.sigma2), hex64(r.mask.checksum()),
                      csv_number(r.observed_psnr), config_to_json(cfg).dump()});
        std::lock_guard lock(log_mutex);
        log << "sweep sr=" << csv_number(job.sr) << " seed=" << job.seed << " sigma1=" << csv_number(job.sigma1)
            << " sigma2=" << csv_number(job.sigma2) << " psnr=" << csv_number(r.psnr) << "\n";
    });
    return csv;
}

}  // namespace mptc
