#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mptc/io.hpp"
#include "mptc/mask.hpp"
#include "mptc/solver.hpp"

namespace mptc {

/// Scales t by 1/peak (and back).
[[nodiscard]] Tensor3 normalize(const Tensor3& t, double peak);
[[nodiscard]] Tensor3 denormalize(const Tensor3& t, double peak);

[[nodiscard]] std::string to_string(InnerOptimizerKind kind);
[[nodiscard]] InnerOptimizerKind parse_optimizer_kind(const std::string& name);
[[nodiscard]] std::string to_string(TransformG::Mode mode);
[[nodiscard]] TransformG::Mode parse_transform_mode(const std::string& name);

/// Full JSON echo of a solver configuration.
[[nodiscard]] nlohmann::json config_to_json(const SolverConfig& cfg);
/// Applies the fields present in `overrides` on top of `base`.
[[nodiscard]] SolverConfig config_from_json(const nlohmann::json& overrides, SolverConfig base = {});

/// The four denoiser configurations of an ablation study.
enum class Ablation { Full, RemoveLocal, RemoveNonlocal, RemoveBoth };

[[nodiscard]] std::string to_string(Ablation a);
[[nodiscard]] Ablation parse_ablation(const std::string& name);
[[nodiscard]] SolverConfig apply_ablation(SolverConfig cfg, Ablation a);

struct RunManifest {
    std::string sample_name;
    std::vector<std::filesystem::path> inputs;
    DatasetKind kind = DatasetKind::ColorImage;
    std::vector<double> sampling_rates;
    std::vector<std::uint64_t> seeds{0};
    SolverConfig config;
    /// Sigma overrides swept by cmd_sweep; empty means the config's value.
    std::vector<double> sigma1_values;
    std::vector<double> sigma2_values;
    std::vector<Ablation> ablations{Ablation::Full, Ablation::RemoveLocal, Ablation::RemoveNonlocal,
                                    Ablation::RemoveBoth};
    std::filesystem::path output_dir = ".";
    std::size_t workers = 1;
    bool trace = false;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    /// Relative input paths resolve against `base_dir`.
    [[nodiscard]] static RunManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    [[nodiscard]] static RunManifest load(const std::filesystem::path& path);
};

/// One solve of a sample at a sampling rate and mask seed.
struct CompletionResult {
    MaskTensor mask;
    double observed_psnr = 0.0;
    double psnr = 0.0;  ///< of X against the sample
    double ssim = 0.0;
    ReconstructionReport report;  ///< in normalized units
};

/// Masks the sample, solves in [0, 1] units and scores X against the sample.
/// The mask argument, when given, replaces gen_mask(sr, seed).
[[nodiscard]] CompletionResult complete_sample(const DatasetSample& sample, double sr, std::uint64_t seed,
                                               const SolverConfig& cfg, bool trace,
                                               const std::optional<MaskTensor>& mask = std::nullopt);

/// Leading columns of every metrics CSV.
inline constexpr const char* kCsvBaseHeader = "name,sr,seed,psnr,ssim,iterations,seconds";

/// Formats a double for CSV: shortest round-trip form, "inf"/"-inf"/"nan".
[[nodiscard]] std::string csv_number(double v);

/// Per-iteration history table: iteration,rel_change,loss,psnr_x,ssim_x,psnr_y,ssim_y.
void write_history_csv(const std::vector<IterationRecord>& history, const std::filesystem::path& path);

struct CompleteArgs {
    std::vector<std::filesystem::path> inputs;
    DatasetKind kind = DatasetKind::ColorImage;
    std::string name;
    double sr = 0.2;
    std::uint64_t mask_seed = 0;
    std::optional<std::filesystem::path> mask_file;
    SolverConfig config;
    std::filesystem::path output_dir = ".";
    bool trace = false;
    bool write_png = false;
};

struct CompleteOutputs {
    std::filesystem::path reconstruction;
    std::filesystem::path history;
    std::optional<std::filesystem::path> png;
    std::string summary;
    CompletionResult result;
};

/// Single reconstruction. Writes <name>_x.tns (denormalized X) and
/// <name>_history.csv only after the solve succeeds.
CompleteOutputs cmd_complete(const CompleteArgs& args, std::ostream& log);

/// Runs the manifest's ablation configurations on every (sr, seed) with one
/// shared mask per pair; writes ablation.csv in the output directory.
std::filesystem::path cmd_ablate(const RunManifest& m, std::ostream& log);

/// Cross product of SRs, seeds and sigma overrides into sweep.csv; rows whose
/// key is already present are skipped, so reruns resume.
std::filesystem::path cmd_sweep(const RunManifest& m, std::ostream& log);

}  // namespace mptc
