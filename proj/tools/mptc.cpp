#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "mptc/bench.hpp"
#include "mptc/errors.hpp"
#include "mptc/metrics.hpp"

namespace fs = std::filesystem;
using namespace mptc;

namespace {

// Solver flags shared by every subcommand that runs the solver. Values start
// at the SolverConfig defaults; only flags given on the command line change
// them.
struct SolverFlags {
    SolverConfig cfg;
    std::string optimizer = "gd";
    std::string transform = "identity";
    std::string local_kind = "gaussian-smoother";
    std::string nonlocal_kind = "bm3d";
    std::string endpoint;
    bool no_local = false;
    bool no_nonlocal = false;

    void attach(CLI::App* app) {
        app->add_option("--rank", cfg.rank, "Tubal rank r of the factors")->capture_default_str();
        app->add_option("--outer-iterations", cfg.outer_iterations, "Outer ADMM iterations K")->capture_default_str();
        app->add_option("--inner-iterations", cfg.inner.steps, "Factor steps L per outer iteration")
            ->capture_default_str();
        app->add_option("--tolerance", cfg.tolerance, "Relative-change stopping threshold")->capture_default_str();
        app->add_option("--rho", cfg.rho, "Penalty of the X = g(A*B) constraint")->capture_default_str();
        app->add_option("--psi", cfg.psi, "Penalty of the X = Y constraint")->capture_default_str();
        app->add_option("--sigma1", cfg.sigma1, "Local denoiser strength")->capture_default_str();
        app->add_option("--sigma2", cfg.sigma2, "Non-local denoiser strength")->capture_default_str();
        app->add_option("--ptv-weight", cfg.inner.ptv_weight, "Factor-gradient penalty weight")->capture_default_str();
        app->add_option("--l1-epsilon", cfg.inner.l1_epsilon, "Smoothing of the factor-gradient penalty")
            ->capture_default_str();
        app->add_option("--learning-rate", cfg.inner.learning_rate, "Inner step size")->capture_default_str();
        app->add_option("--optimizer", optimizer, "Inner optimizer: gd or adam")->capture_default_str();
        app->add_option("--transform", transform, "Map g: identity or learnable-linear")->capture_default_str();
        app->add_option("--local-denoiser", local_kind, "gaussian-smoother, tv-smoother, external-bridge, identity")
            ->capture_default_str();
        app->add_option("--nonlocal-denoiser", nonlocal_kind, "bm3d, gaussian-smoother, tv-smoother, external-bridge")
            ->capture_default_str();
        app->add_option("--bridge-endpoint", endpoint, "Command line of the external denoiser process");
        app->add_flag("--persistent-bridge", cfg.local.persistent_bridge, "Keep one bridge process per solve");
        app->add_option("--bridge-timeout", cfg.local.bridge_timeout_seconds, "Seconds per bridge call")
            ->capture_default_str();
        app->add_flag("--bm3d-wiener", cfg.nonlocal.bm3d.wiener, "Add the Wiener stage to BM3D");
        app->add_flag("--no-local", no_local, "Disable the local denoiser");
        app->add_flag("--no-nonlocal", no_nonlocal, "Disable the non-local denoiser");
        app->add_flag("--clamp-observed", cfg.clamp_observed, "Copy observed entries into the returned X");
        app->add_option("--init-seed", cfg.seed, "Seed of the factor initialization")->capture_default_str();
    }

    SolverConfig finish() {
        cfg.inner.optimizer = parse_optimizer_kind(optimizer);
        cfg.transform = parse_transform_mode(transform);
        cfg.local.kind = parse_denoiser_kind(local_kind);
        cfg.nonlocal.kind = parse_denoiser_kind(nonlocal_kind);
        cfg.nonlocal.persistent_bridge = cfg.local.persistent_bridge;
        cfg.nonlocal.bridge_timeout_seconds = cfg.local.bridge_timeout_seconds;
        if (!endpoint.empty()) {
            cfg.local.endpoint = endpoint;
            cfg.nonlocal.endpoint = endpoint;
        }
        cfg.enable_local = !no_local;
        cfg.enable_nonlocal = !no_nonlocal;
        cfg.validate();
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank tensor completion with plug-and-play denoisers"};
    app.require_subcommand(1);

    // complete
    CompleteArgs complete;
    SolverFlags complete_flags;
    std::string complete_kind = "color-image";
    auto* c = app.add_subcommand("complete", "Reconstruct one sample and write X, history and a summary line");
    c->add_option("--input", complete.inputs, "Image file(s) stacked along channels, or one .tns file")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--kind", complete_kind, "color-image, hyperspectral or video")->capture_default_str();
    c->add_option("--name", complete.name, "Sample name used for output files");
    c->add_option("--sr", complete.sr, "Sampling rate in (0, 1]")->capture_default_str();
    c->add_option("--mask-seed", complete.mask_seed, "Seed of the sampling mask")->capture_default_str();
    c->add_option("--mask", complete.mask_file, "Use a saved mask (.tns) instead of generating one")
        ->check(CLI::ExistingFile);
    c->add_option("--output-dir", complete.output_dir, "Directory for outputs")->capture_default_str();
    c->add_flag("--trace", complete.trace, "Record per-iteration PSNR/SSIM against the input");
    c->add_flag("--png", complete.write_png, "Also write X as PNG (1 or 3 channels)");
    complete_flags.attach(c);

    // ablate / sweep
    std::string manifest_path;
    std::size_t workers = 0;
    auto* a = app.add_subcommand("ablate", "Run the four denoiser configurations from a manifest");
    a->add_option("--manifest", manifest_path, "JSON run manifest")->required()->check(CLI::ExistingFile);
    a->add_option("--workers", workers, "Parallel solves (overrides the manifest)");
    auto* s = app.add_subcommand("sweep", "Sweep SRs, seeds and sigmas from a manifest (resumable)");
    s->add_option("--manifest", manifest_path, "JSON run manifest")->required()->check(CLI::ExistingFile);
    s->add_option("--workers", workers, "Parallel solves (overrides the manifest)");

    // mask
    std::vector<std::size_t> mask_shape;
    double mask_sr = 0.2;
    std::uint64_t mask_seed = 0;
    fs::path mask_out;
    auto* m = app.add_subcommand("mask", "Generate a sampling mask as a raw tensor");
    m->add_option("--shape", mask_shape, "H W C")->required()->expected(3)->delimiter(',');
    m->add_option("--sr", mask_sr, "Sampling rate in (0, 1]")->capture_default_str();
    m->add_option("--seed", mask_seed, "Mask seed")->capture_default_str();
    m->add_option("--output", mask_out, "Output .tns path")->required();

    // metrics
    std::vector<fs::path> metric_x, metric_ref;
    std::optional<double> metric_peak;
    std::string metric_kind = "color-image";
    auto* q = app.add_subcommand("metrics", "PSNR and SSIM of an estimate against a reference");
    q->add_option("--estimate", metric_x, "Estimate: image file(s) or .tns")->required()->check(CLI::ExistingFile);
    q->add_option("--reference", metric_ref, "Reference: image file(s) or .tns")->required()->check(CLI::ExistingFile);
    q->add_option("--kind", metric_kind, "Dataset kind, sets the default peak")->capture_default_str();
    q->add_option("--peak", metric_peak, "Peak value (defaults to the kind's upper bound)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c->parsed()) {
            complete.kind = parse_dataset_kind(complete_kind);
            complete.config = complete_flags.finish();
            (void)cmd_complete(complete, std::cout);
        } else if (a->parsed() || s->parsed()) {
            RunManifest manifest = RunManifest::load(manifest_path);
            if (workers > 0) manifest.workers = workers;
            const fs::path csv = a->parsed() ? cmd_ablate(manifest, std::cerr) : cmd_sweep(manifest, std::cerr);
            std::cout << csv.string() << "\n";
        } else if (m->parsed()) {
            MaskTensor mask = gen_mask(mask_shape[0], mask_shape[1], mask_shape[2], mask_sr, mask_seed);
            save_raw(mask.as_tensor(), mask_out, kRawMask);
            std::printf("observed=%zu total=%zu checksum=%016llx\n", mask.count(), mask.shape().size(),
                        static_cast<unsigned long long>(mask.checksum()));
        } else if (q->parsed()) {
            const DatasetKind kind = parse_dataset_kind(metric_kind);
            const DatasetSample x = load_sample(metric_x, kind);
            const DatasetSample ref = load_sample(metric_ref, kind);
            const MetricContext ctx{.peak = metric_peak.value_or(peak_for(kind))};
            std::cout << "psnr=" << csv_number(psnr(x.tensor, ref.tensor, ctx))
                      << " ssim=" << csv_number(ssim(x.tensor, ref.tensor, ctx)) << "\n";
        }
    } catch (const mptc::Error& e) {
        std::cerr << "mptc: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "mptc: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
