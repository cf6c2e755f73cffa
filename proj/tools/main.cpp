// Command-line surface: every analysis the library implements, exposed as
// deterministic CSV/JSON emitters plus self-checking verification suites.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dctattn/attention.hpp"
#include "dctattn/compressed.hpp"
#include "dctattn/cost.hpp"
#include "dctattn/dct.hpp"
#include "dctattn/linalg.hpp"
#include "dctattn/toy.hpp"

using namespace dctattn;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Sends `text` to the --out file when given (with a summary line on stdout),
// otherwise prints it directly.
void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f)
        throw std::invalid_argument("cannot open output file '" + out_path + "'");
    f << text;
    std::cout << "wrote " << out_path << "\n";
}

// ---- deterministic random fixtures for the verification suites ----

Tensor3 random_input(const AttentionConfig& cfg, Rng& rng) {
    Tensor3 x(cfg.windows, cfg.tokens(), cfg.channels);
    for (double& v : x.data()) v = rng.normal();
    return x;
}

CompressedWeights random_compressed(const AttentionConfig& cfg, std::size_t kept,
                                    Rng& rng) {
    CompressedWeights w = CompressedWeights::init(cfg, kept, 0.02, 1);
    auto fill = [&rng](Matrix& m, double s) {
        for (double& v : m.data()) v = s * rng.normal();
    };
    fill(w.wq, 0.3); fill(w.wk, 0.3); fill(w.wv, 0.3); fill(w.wo, 0.3);
    for (double& v : w.bq) v = 0.1 * rng.normal();
    for (double& v : w.bk) v = 0.1 * rng.normal();
    for (double& v : w.bv) v = 0.1 * rng.normal();
    for (double& v : w.bo) v = 0.1 * rng.normal();
    for (Matrix& t : w.bias_tables) fill(t, 0.1);
    return w;
}

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

// ---- subcommand bodies (return the process exit code) ----

int cmd_dct_table(std::size_t size, double tau, bool have_tau, const std::string& out) {
    const DctBasis basis = dct_matrix(size);
    std::ostringstream csv;
    csv << "matrix,row";
    for (std::size_t n = 0; n < size; ++n) csv << ",n" << n;
    csv << "\n";
    for (std::size_t k = 0; k < size; ++k) {
        csv << "D," << k;
        for (std::size_t n = 0; n < size; ++n) csv << "," << fmt17(basis.d(k, n));
        csv << "\n";
    }
    if (have_tau) {
        const TruncatedDct trunc = truncate(basis, tau);
        for (std::size_t k = 0; k < trunc.kept; ++k) {
            csv << "Dbar," << k;
            for (std::size_t n = 0; n < size; ++n) csv << "," << fmt17(trunc.dbar(k, n));
            csv << "\n";
        }
    }
    emit(csv.str(), out);
    return 0;
}

int cmd_coverage(std::size_t size, const std::string& out) {
    const CoverageReport report = spectral_coverage(size);
    std::ostringstream csv;
    csv << "k,coverage";
    for (std::size_t l = 0; l < size; ++l) csv << ",basis" << l;
    csv << "\n";
    for (std::size_t k = 0; k < size; ++k) {
        csv << k << "," << fmt17(report.coverage[k]);
        for (std::size_t l = 0; l < size; ++l)
            csv << "," << fmt17(report.basis_spectra(l, k));
        csv << "\n";
    }
    emit(csv.str(), out);
    return 0;
}

int cmd_klt(std::size_t size, double rho, const std::string& out) {
    const KltReport report = klt_compare(size, rho);
    json j;
    j["size"] = size;
    j["rho"] = rho;
    j["off_diagonal_ratio"] = report.off_diagonal_ratio;
    j["dct_variances"] = report.dct_variances;
    j["cumulative_energy"] = report.cumulative_energy;
    j["eigenvalues"] = report.eigenvalues;
    j["cosines"] = report.cosines;
    double mean = 0.0;
    for (double c : report.cosines) mean += c;
    j["mean_cosine"] = mean / static_cast<double>(size);
    json curve = json::array();
    for (std::size_t kept = 1; kept <= size; ++kept) {
        curve.push_back({{"kept", kept},
                         {"tau", static_cast<double>(kept) / static_cast<double>(size)},
                         {"fraction", report.cumulative_energy[kept - 1]}});
    }
    j["compaction"] = curve;
    emit(j.dump(2) + "\n", out);
    return 0;
}

int cmd_equiv(std::uint64_t seed, bool grid, double inject) {
    constexpr double kTol = 1e-10;
    int checks = 0;
    Rng rng(seed);
    bool injected = false;  // corrupt only the first comparison

    struct Combo { std::size_t c, p; double tau; };
    std::vector<Combo> combos;
    const std::vector<std::size_t> cs = grid ? std::vector<std::size_t>{4, 8, 16}
                                             : std::vector<std::size_t>{8};
    for (std::size_t c : cs)
        for (double tau : {0.25, 0.5, 0.75, 1.0})
            for (std::size_t p : {std::size_t{1}, std::size_t{2}}) {
                const std::size_t kept = kept_count(c, tau);
                if (c % p != 0 || kept % p != 0) continue;
                combos.push_back({c, p, tau});
            }

    // Suite 1: naive and simplified compute the same function.
    for (const Combo& combo : combos) {
        const AttentionConfig cfg{2, 2, combo.c, combo.p};
        const TruncatedDct trunc = truncate(dct_matrix(combo.c), combo.tau);
        const CompressedWeights cw = random_compressed(cfg, trunc.kept, rng);
        const Tensor3 x = random_input(cfg, rng);
        Tensor3 naive = compressed_forward(x, cw, cfg, trunc, CompressedVariant::Naive);
        const Tensor3 simp = compressed_forward(x, cw, cfg, trunc,
                                                CompressedVariant::Simplified);
        if (inject != 0.0 && !injected) {
            naive.data()[0] += inject;
            injected = true;
        }
        const double diff = max_abs_diff(naive, simp);
        const std::string name = "naive-vs-simplified c=" + std::to_string(combo.c) +
                                 " p=" + std::to_string(combo.p) +
                                 " tau=" + std::to_string(combo.tau);
        if (!(diff < kTol)) {
            std::cout << "validation failure: " << name << ": max diff "
                      << fmt17(diff) << " exceeds " << fmt17(kTol) << "\n";
            return 1;
        }
        std::cout << "ok " << name << " max_diff=" << fmt17(diff) << "\n";
        ++checks;
    }

    // Suite 2: a full-width compressed block folds into plain attention.
    for (std::size_t c : cs)
        for (std::size_t p : {std::size_t{1}, std::size_t{2}}) {
            if (c % p != 0) continue;
            const AttentionConfig cfg{2, 2, c, p};
            const DctBasis basis = dct_matrix(c);
            const TruncatedDct trunc = truncate(basis, 1.0);
            const CompressedWeights cw = random_compressed(cfg, c, rng);
            const Tensor3 x = random_input(cfg, rng);
            const Tensor3 compressed =
                compressed_forward(x, cw, cfg, trunc, CompressedVariant::Naive);
            const Tensor3 folded = msa_forward(x, conjugate_tau1(cw, basis), cfg);
            const double diff = max_abs_diff(compressed, folded);
            const std::string name = "tau1-conjugation c=" + std::to_string(c) +
                                     " p=" + std::to_string(p);
            if (!(diff < kTol)) {
                std::cout << "validation failure: " << name << ": max diff "
                          << fmt17(diff) << " exceeds " << fmt17(kTol) << "\n";
                return 1;
            }
            std::cout << "ok " << name << " max_diff=" << fmt17(diff) << "\n";
            ++checks;
        }

    // Suite 3: channel truncation without the transform degenerates to the
    // plain block at tau = 1.
    for (std::size_t c : cs) {
        const AttentionConfig cfg{2, 2, c, 1};
        const CompressedWeights cw = random_compressed(cfg, c, rng);
        const Tensor3 x = random_input(cfg, rng);
        AttentionWeights w;
        w.wq = cw.wq; w.wk = cw.wk; w.wv = cw.wv; w.wo = cw.wo;
        w.bq = cw.bq; w.bk = cw.bk; w.bv = cw.bv; w.bo = cw.bo;
        w.bias_tables = cw.bias_tables;
        const Tensor3 plain = msa_forward(x, w, cfg);
        const Tensor3 sliced = truncate_no_dct_forward(x, cw, cfg, 1.0);
        const double diff = max_abs_diff(plain, sliced);
        const std::string name = "no-transform-tau1 c=" + std::to_string(c);
        if (!(diff < kTol)) {
            std::cout << "validation failure: " << name << ": max diff "
                      << fmt17(diff) << " exceeds " << fmt17(kTol) << "\n";
            return 1;
        }
        std::cout << "ok " << name << " max_diff=" << fmt17(diff) << "\n";
        ++checks;
    }

    std::cout << "all " << checks << " equivalence checks passed\n";
    return 0;
}

ToyModelConfig mode_config(const std::string& mode, double tau, bool freeze,
                           std::uint64_t seed) {
    ToyModelConfig cfg;
    cfg.dims = AttentionConfig{1, 2, 8, 2};
    cfg.tau = tau;
    cfg.init_std = 0.5;
    cfg.seed = seed;
    if (mode == "linear") cfg.mode = ToyMode::LinearOnly;
    else if (mode == "vanilla") cfg.mode = ToyMode::Vanilla;
    else if (mode == "dct-q" || mode == "dct-k" || mode == "dct-v" || mode == "dct-qkv") {
        cfg.mode = ToyMode::DctInit;
        cfg.target.q = mode == "dct-q" || mode == "dct-qkv";
        cfg.target.k = mode == "dct-k" || mode == "dct-qkv";
        cfg.target.v = mode == "dct-v" || mode == "dct-qkv";
        cfg.target.freeze = freeze;
    } else if (mode == "naive") cfg.mode = ToyMode::CompressedNaive;
    else if (mode == "simplified") cfg.mode = ToyMode::CompressedSimplified;
    else if (mode == "no-dct") cfg.mode = ToyMode::TruncateNoDct;
    else
        throw std::invalid_argument(
            "unknown mode '" + mode +
            "' (want linear|vanilla|dct-q|dct-k|dct-v|dct-qkv|naive|simplified|no-dct)");
    return cfg;
}

ToyDatasetSpec dataset_spec(std::size_t samples, double rho, double margin,
                            std::uint64_t seed) {
    ToyDatasetSpec spec;
    spec.samples = samples;
    spec.windows = 1;
    spec.window_size = 2;
    spec.channels = 8;
    spec.rho = rho;
    spec.margin = margin;
    spec.seed = seed;
    return spec;
}

int cmd_gradcheck(const std::string& mode, std::uint64_t seed, double inject) {
    constexpr double kTol = 1e-5;
    ToyModel model = ToyModel::create(mode_config(mode, 0.5, false, seed));
    const ToyDataset data = gen_synthetic(dataset_spec(2, 0.3, 2.0, seed + 1000));
    const ToySample& sample = data.samples.front();

    double err;
    if (inject == 0.0) {
        err = grad_check(model, sample);
    } else {
        // Test hook: rerun the comparison with one analytic entry corrupted,
        // to exercise the failure exit path.
        std::vector<double> analytic;
        toy_batch_grad(model, {sample}, analytic);
        analytic[0] += inject;
        const double step = 1e-5;
        err = 0.0;
        std::size_t offset = 0;
        for (ParamView& view : toy_params(model)) {
            for (std::size_t i = 0; i < view.size; ++i) {
                if (view.frozen) continue;
                double& p = view.data[i];
                const double saved = p;
                p = saved + step;
                const double up = toy_loss(model, sample);
                p = saved - step;
                const double down = toy_loss(model, sample);
                p = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double a = analytic[offset + i];
                if (std::abs(a) < 1e-9 && std::abs(numeric) < 1e-9) continue;
                err = std::max(err, std::abs(a - numeric) /
                                        std::max({std::abs(a), std::abs(numeric), 1e-8}));
            }
            offset += view.size;
        }
    }

    std::cout << "mode=" << mode << " max_relative_error=" << fmt17(err) << "\n";
    if (!(err < kTol)) {
        std::cout << "validation failure: gradient check: " << fmt17(err)
                  << " not below " << fmt17(kTol) << "\n";
        return 1;
    }
    return 0;
}

json breakdown_json(const CostBreakdown& b) {
    return {{"dct", b.dct},       {"qkv", b.qkv},
            {"attn_scores", b.attn_scores}, {"attn_values", b.attn_values},
            {"idct", b.idct},     {"out_proj", b.out_proj},
            {"total", b.total()}};
}

json params_json(const ParamBreakdown& p) {
    return {{"qkv_weights", p.qkv_weights}, {"qkv_biases", p.qkv_biases},
            {"out_weight", p.out_weight},   {"out_bias", p.out_bias},
            {"bias_tables", p.bias_tables}, {"total", p.total()}};
}

int cmd_cost(const std::string& model, double tau, const std::string& variant_name,
             const std::string& out) {
    MsaVariant variant;
    if (variant_name == "vanilla") variant = MsaVariant::Vanilla;
    else if (variant_name == "naive") variant = MsaVariant::Naive;
    else if (variant_name == "simplified") variant = MsaVariant::Simplified;
    else
        throw std::invalid_argument("unknown variant '" + variant_name +
                                    "' (want vanilla|naive|simplified)");

    ModelSpec spec;
    if (model == "swin-t" || model == "swin-s") spec = builtin_model(model);
    else spec = load_model_spec(model);

    json stages = json::array();
    for (const StageSpec& s : spec.stages) {
        const BlockShape shape{s.tokens, s.channels, spec.window, s.heads};
        stages.push_back(
            {{"tokens", s.tokens},
             {"channels", s.channels},
             {"heads", s.heads},
             {"depth", s.depth},
             {"block_mults_baseline", breakdown_json(block_mults(shape, MsaVariant::Vanilla, tau))},
             {"block_mults_variant", breakdown_json(block_mults(shape, variant, tau))},
             {"block_params_baseline",
              params_json(block_params(s.channels, spec.window, s.heads, MsaVariant::Vanilla, tau))},
             {"block_params_variant",
              params_json(block_params(s.channels, spec.window, s.heads, variant, tau))}});
    }

    const ModelTotals totals = model_totals(spec, tau, variant);
    json j;
    j["model"] = spec.name.empty() ? model : spec.name;
    j["window"] = spec.window;
    j["tau"] = tau;
    j["variant"] = variant_name;
    j["stages"] = stages;
    j["baseline_params"] = totals.baseline_params;
    j["variant_params"] = totals.variant_params;
    j["param_delta"] = totals.param_delta;
    j["baseline_mults"] = totals.baseline_mults;
    j["variant_mults"] = totals.variant_mults;
    j["mult_delta"] = totals.mult_delta;
    const FusionCost fusion = fusion_break_even(tau);
    j["fusion"] = {{"separate_coeff", fusion.separate_coeff},
                   {"fused_coeff", fusion.fused_coeff},
                   {"winner", fusion.winner}};
    emit(j.dump(2) + "\n", out);
    return 0;
}

int cmd_train(const std::string& mode, std::size_t steps, std::uint64_t seed,
              const std::string& out, double lr, double momentum, std::size_t samples,
              double tau, double rho, double margin, bool freeze,
              const std::string& dump_data) {
    ToyModel model = ToyModel::create(mode_config(mode, tau, freeze, seed));
    const ToyDataset data = gen_synthetic(dataset_spec(samples, rho, margin, seed + 1000));

    if (!dump_data.empty()) {
        std::ostringstream csv;
        csv << "sample,label,window,token";
        for (std::size_t c = 0; c < data.spec.channels; ++c) csv << ",c" << c;
        csv << "\n";
        for (std::size_t i = 0; i < data.samples.size(); ++i) {
            const ToySample& s = data.samples[i];
            for (std::size_t w = 0; w < s.x.windows(); ++w)
                for (std::size_t t = 0; t < s.x.tokens(); ++t) {
                    csv << i << "," << s.label << "," << w << "," << t;
                    for (std::size_t c = 0; c < s.x.channels(); ++c)
                        csv << "," << fmt17(s.x.at(w, t, c));
                    csv << "\n";
                }
        }
        emit(csv.str(), dump_data);
    }

    const SgdConfig opt{lr, momentum};
    const TrainHistory history = train(model, data, opt, steps);

    std::ostringstream csv;
    csv << "step,loss\n";
    for (std::size_t i = 0; i < history.losses.size(); ++i)
        csv << i << "," << fmt17(history.losses[i]) << "\n";
    emit(csv.str(), out);

    std::cout << history.config << "\n";
    std::cout << "initial_loss=" << fmt17(history.losses.front())
              << " final_loss=" << fmt17(history.losses.back())
              << " accuracy=" << fmt17(history.final_accuracy) << "\n";
    return 0;
}

int cmd_bench(std::uint64_t seed, bool grid, double inject, const std::string& out) {
    Rng rng(seed);
    std::ostringstream csv;
    csv << "tokens,channels,window,heads,variant,tau,kept,closed_form,measured,match\n";

    struct Dims { std::size_t n, m; };
    const std::vector<Dims> dims = grid ? std::vector<Dims>{{1, 2}, {2, 3}}
                                        : std::vector<Dims>{{1, 2}};
    const std::vector<std::size_t> cs = grid ? std::vector<std::size_t>{4, 8, 16}
                                             : std::vector<std::size_t>{4, 8};
    bool all_match = true;
    std::string first_failure;
    std::size_t rows = 0;
    bool injected = false;

    auto run_one = [&](const AttentionConfig& cfg, MsaVariant variant, double tau,
                       const char* variant_name) {
        const BlockShape shape{cfg.windows * cfg.tokens(), cfg.channels,
                               cfg.window_size, cfg.heads};
        const std::uint64_t closed = block_mults(shape, variant, tau).total();
        const std::size_t kept = kept_count(cfg.channels, tau);

        MulCounter counter;
        const Tensor3 x = random_input(cfg, rng);
        if (variant == MsaVariant::Vanilla) {
            AttentionWeights w = AttentionWeights::init(cfg, 0.02, seed + rows);
            msa_forward(x, w, cfg, nullptr, &counter);
        } else {
            const TruncatedDct trunc = truncate(dct_matrix(cfg.channels), tau);
            const CompressedWeights cw = random_compressed(cfg, kept, rng);
            compressed_forward(x, cw, cfg, trunc,
                               variant == MsaVariant::Naive ? CompressedVariant::Naive
                                                            : CompressedVariant::Simplified,
                               nullptr, &counter);
        }
        std::uint64_t measured = counter.total;
        if (inject != 0.0 && !injected) {
            measured += static_cast<std::uint64_t>(std::abs(inject));  // test hook
            injected = true;
        }
        const bool match = measured == closed;
        if (!match && first_failure.empty())
            first_failure = "bench: " + std::string(variant_name) + " c=" +
                            std::to_string(cfg.channels) + " tau=" + std::to_string(tau) +
                            ": closed form " + std::to_string(closed) + " != measured " +
                            std::to_string(measured);
        all_match = all_match && match;
        csv << shape.tokens << "," << cfg.channels << "," << cfg.window_size << ","
            << cfg.heads << "," << variant_name << "," << fmt17(tau) << "," << kept << ","
            << closed << "," << measured << "," << (match ? 1 : 0) << "\n";
        ++rows;
    };

    for (const Dims& d : dims)
        for (std::size_t c : cs)
            for (std::size_t p : {std::size_t{1}, std::size_t{2}}) {
                if (c % p != 0) continue;
                const AttentionConfig cfg{d.n, d.m, c, p};
                run_one(cfg, MsaVariant::Vanilla, 1.0, "vanilla");
                for (double tau : {0.25, 0.5, 0.75, 1.0}) {
                    const std::size_t kept = kept_count(c, tau);
                    if (kept % p != 0) continue;
                    run_one(cfg, MsaVariant::Naive, tau, "naive");
                    run_one(cfg, MsaVariant::Simplified, tau, "simplified");
                }
            }

    emit(csv.str(), out);
    std::cout << rows << " combinations, " << (all_match ? "all match" : "MISMATCH") << "\n";
    if (!all_match) {
        std::cout << "validation failure: " << first_failure << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DCT-based attention analysis toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    // dct-table
    std::size_t dt_size = 8;
    double dt_tau = 0.0;
    std::string dt_out;
    CLI::App* dct_table = app.add_subcommand("dct-table", "Emit the DCT matrix as CSV");
    dct_table->add_option("--size", dt_size, "transform size")->required();
    CLI::Option* dt_tau_opt = dct_table->add_option("--tau", dt_tau, "also emit the truncated matrix");
    dct_table->add_option("--out", dt_out, "output file (default stdout)");
    dct_table->callback([&] {
        exit_code = cmd_dct_table(dt_size, dt_tau, dt_tau_opt->count() > 0, dt_out);
    });

    // coverage
    std::size_t cov_size = 8;
    std::string cov_out;
    CLI::App* coverage = app.add_subcommand("coverage", "Per-frequency DFT coverage of the DCT basis");
    coverage->add_option("--size", cov_size, "transform size")->required();
    coverage->add_option("--out", cov_out, "output file (default stdout)");
    coverage->callback([&] { exit_code = cmd_coverage(cov_size, cov_out); });

    // klt
    std::size_t klt_size = 8;
    double klt_rho = 0.9;
    std::string klt_out;
    CLI::App* klt = app.add_subcommand("klt", "Compare the DCT against the AR(1) KLT");
    klt->add_option("--size", klt_size, "transform size")->required();
    klt->add_option("--rho", klt_rho, "AR(1) correlation")->required();
    klt->add_option("--out", klt_out, "output file (default stdout)");
    klt->callback([&] { exit_code = cmd_klt(klt_size, klt_rho, klt_out); });

    // equiv
    std::uint64_t eq_seed = 1;
    bool eq_grid = false;
    double eq_inject = 0.0;
    CLI::App* equiv = app.add_subcommand("equiv", "Run the block-equivalence suites");
    equiv->add_option("--seed", eq_seed, "random seed");
    equiv->add_flag("--grid", eq_grid, "full size/ratio/head grid");
    equiv->add_option("--inject-error", eq_inject)->group("");  // test hook
    equiv->callback([&] { exit_code = cmd_equiv(eq_seed, eq_grid, eq_inject); });

    // gradcheck
    std::string gc_mode = "vanilla";
    std::uint64_t gc_seed = 1;
    double gc_inject = 0.0;
    CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    gradcheck_cmd->add_option("--mode", gc_mode, "model mode")->required();
    gradcheck_cmd->add_option("--seed", gc_seed, "random seed");
    gradcheck_cmd->add_option("--inject-error", gc_inject)->group("");  // test hook
    gradcheck_cmd->callback([&] { exit_code = cmd_gradcheck(gc_mode, gc_seed, gc_inject); });

    // cost
    std::string cost_model, cost_variant = "simplified", cost_out;
    double cost_tau = 0.25;
    CLI::App* cost = app.add_subcommand("cost", "Closed-form multiplication/parameter model");
    cost->add_option("--model", cost_model, "swin-t, swin-s, or a spec file")->required();
    cost->add_option("--tau", cost_tau, "truncation ratio")->required();
    cost->add_option("--variant", cost_variant, "vanilla|naive|simplified");
    cost->add_option("--out", cost_out, "output file (default stdout)");
    cost->callback([&] { exit_code = cmd_cost(cost_model, cost_tau, cost_variant, cost_out); });

    // train
    std::string tr_mode = "vanilla", tr_out, tr_dump;
    std::size_t tr_steps = 300, tr_samples = 512;
    std::uint64_t tr_seed = 1;
    double tr_lr = 0.05, tr_momentum = 0.9, tr_tau = 0.5, tr_rho = 0.3, tr_margin = 2.0;
    bool tr_freeze = false;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the toy classifier");
    train_cmd->add_option("--mode", tr_mode, "model mode")->required();
    train_cmd->add_option("--steps", tr_steps, "training steps");
    train_cmd->add_option("--seed", tr_seed, "random seed");
    train_cmd->add_option("--out", tr_out, "loss-history CSV file")->required();
    train_cmd->add_option("--lr", tr_lr, "learning rate");
    train_cmd->add_option("--momentum", tr_momentum, "SGD momentum");
    train_cmd->add_option("--samples", tr_samples, "dataset size");
    train_cmd->add_option("--tau", tr_tau, "truncation ratio (compressed modes)");
    train_cmd->add_option("--rho", tr_rho, "dataset AR(1) correlation");
    train_cmd->add_option("--margin", tr_margin, "dataset class margin");
    train_cmd->add_flag("--freeze", tr_freeze, "freeze DCT-initialized projections");
    train_cmd->add_option("--dump-data", tr_dump, "also write the dataset as CSV");
    train_cmd->callback([&] {
        exit_code = cmd_train(tr_mode, tr_steps, tr_seed, tr_out, tr_lr, tr_momentum,
                              tr_samples, tr_tau, tr_rho, tr_margin, tr_freeze, tr_dump);
    });

    // bench
    std::uint64_t bn_seed = 1;
    bool bn_grid = false;
    double bn_inject = 0.0;
    std::string bn_out;
    CLI::App* bench = app.add_subcommand("bench", "Closed-form counts vs instrumented forward");
    bench->add_option("--seed", bn_seed, "random seed");
    bench->add_flag("--grid", bn_grid, "full shape/variant/ratio grid");
    bench->add_option("--out", bn_out, "output file (default stdout)");
    bench->add_option("--inject-error", bn_inject)->group("");  // test hook
    bench->callback([&] { exit_code = cmd_bench(bn_seed, bn_grid, bn_inject, bn_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cout << "validation failure: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
