// hypino: sample parametric PDE data, train the weight-generating network,
// evaluate on the benchmark set, fine-tune single PINNs, and run the
// built-in oracle suites.

#include <CLI11.hpp>
#include <json.hpp>

#include <hypino/benchmarks.hpp>
#include <hypino/dataset.hpp>
#include <hypino/refine.hpp>
#include <hypino/selfcheck.hpp>
#include <hypino/training.hpp>

#include <filesystem>
#include <iostream>

using namespace hypino;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

// Everything the run resolved to, echoed into every output artifact.
struct RunConfig {
    std::vector<std::pair<std::string, std::string>> entries;
    void set(const std::string& k, const std::string& v) { entries.emplace_back(k, v); }
    void set(const std::string& k, double v) { entries.emplace_back(k, format_double(v)); }
    void set(const std::string& k, long long v) { entries.emplace_back(k, std::to_string(v)); }
    std::string echo() const {
        std::string s;
        for (const auto& [k, v] : entries) s += k + "=" + v + "\n";
        return s;
    }
    json to_json() const {
        json j;
        for (const auto& [k, v] : entries) j[k] = v;
        return j;
    }
};

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int cmd_gen_data(int count, double supervised_frac, std::uint64_t seed, int resolution,
                 const std::string& out) {
    if (supervised_frac < 0.0 || supervised_frac > 1.0) {
        std::cerr << "supervised-frac must lie in [0,1]\n";
        return kExitConfig;
    }
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.resolution = resolution;
    RunConfig run;
    run.set("command", "gen-data");
    run.set("count", static_cast<long long>(count));
    run.set("supervised_frac", supervised_frac);
    run.set("seed", static_cast<long long>(seed));
    run.set("resolution", static_cast<long long>(resolution));

    int supervised_count = static_cast<int>(std::llround(supervised_frac * count));
    std::vector<DatasetRecord> records;
    int class_hist[4] = {0, 0, 0, 0};
    int kind_hist[3] = {0, 0, 0};
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        records.push_back(
            make_record(rng, cfg, i < supervised_count, static_cast<std::uint64_t>(i)));
        const PdeInstance& inst = records.back().instance;
        class_hist[static_cast<int>(classify(inst.coeffs))]++;
        for (const auto& bc : inst.conditions) kind_hist[static_cast<int>(bc.kind)]++;
    }
    try {
        write_dataset(out, records, run.echo() + cfg.metadata());
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    }
    std::cout << "wrote " << records.size() << " records to " << out << "\n";
    std::cout << "  classes: elliptic " << class_hist[0] << ", parabolic " << class_hist[1]
              << ", hyperbolic " << class_hist[2] << ", degenerate " << class_hist[3] << "\n";
    std::cout << "  conditions: dirichlet " << kind_hist[0] << ", neumann " << kind_hist[1]
              << ", both " << kind_hist[2] << "\n";
    return kExitOk;
}

int cmd_train(int batches, int batch_size, int phase1, double lr, double lr_min,
              std::uint64_t seed, int resolution, double grad_clip, int interior_points,
              int boundary_points, const std::string& out_dir, bool laplace_only,
              bool full_square, double mms_slope_limit, double source_bound,
              double mms_probe_bound) {
    std::filesystem::create_directories(out_dir);
    TrainConfig cfg;
    cfg.sampler.seed = seed;
    cfg.sampler.resolution = resolution;
    if (laplace_only) cfg.sampler.fixed_operator = OperatorCoeffs{{0, 0, 0, 1, 1}};
    if (full_square)
        cfg.sampler.geometry.min_primitives = cfg.sampler.geometry.max_primitives = 0;
    if (mms_slope_limit > 0) cfg.sampler.mms.slope_limit = mms_slope_limit;
    if (source_bound > 0) cfg.sampler.supervised_source_bound = source_bound;
    if (mms_probe_bound > 0) cfg.sampler.mms.probe_bound = mms_probe_bound;
    cfg.batches = batches;
    cfg.batch_size = batch_size;
    cfg.phase1_batches = phase1 >= 0 ? phase1 : batches / 3;
    cfg.lr_max = lr;
    cfg.lr_min = lr_min;
    cfg.grad_clip = grad_clip;
    cfg.collocation.interior = interior_points;
    cfg.collocation.dirichlet = boundary_points;
    cfg.collocation.neumann = boundary_points;
    cfg.checkpoint_path = out_dir + "/hypernet.ckpt";
    cfg.metrics_path = out_dir + "/train_metrics.csv";

    RunConfig run;
    run.set("command", "train");
    run.set("batches", static_cast<long long>(batches));
    run.set("batch_size", static_cast<long long>(batch_size));
    run.set("phase1_batches", static_cast<long long>(cfg.phase1_batches));
    run.set("lr", lr);
    run.set("lr_min", lr_min);
    run.set("seed", static_cast<long long>(seed));
    run.set("resolution", static_cast<long long>(resolution));
    run.set("grad_clip", grad_clip);
    run.set("interior_points", static_cast<long long>(interior_points));
    run.set("boundary_points", static_cast<long long>(boundary_points));
    run.set("laplace_only", laplace_only ? "1" : "0");
    run.set("full_square", full_square ? "1" : "0");
    cfg.config_echo = run.echo() + cfg.sampler.metadata();

    HypernetConfig hcfg;
    hcfg.resolution = resolution;
    Hypernet net(hcfg);
    std::cout << "training " << net.parameter_count() << " hypernet parameters for " << batches
              << " batches\n";
    TrainResult result = train_hypernet(net, cfg);
    std::cout << "completed " << result.completed_batches << " batches";
    if (!result.batch_loss.empty()) std::cout << ", final batch loss " << result.batch_loss.back();
    std::cout << "\n";
    if (result.diverged) {
        std::cerr << "training diverged; partial artifacts retained in " << out_dir << "\n";
        return kExitDiverged;
    }
    std::cout << "checkpoint: " << cfg.checkpoint_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& benchmarks,
             const std::string& rounds_csv, int eval_res, const std::string& out_dir) {
    std::vector<std::string> ids = benchmarks == "all" ? benchmark_ids() : split_list(benchmarks);
    for (const auto& id : ids) {
        bool known = false;
        for (const auto& k : benchmark_ids()) known = known || k == id;
        if (!known) {
            std::cerr << "unknown benchmark: " << id << "\n";
            return kExitConfig;
        }
    }
    std::vector<int> rounds;
    for (const auto& r : split_list(rounds_csv)) rounds.push_back(std::stoi(r));
    if (rounds.empty()) rounds.push_back(0);

    std::unique_ptr<Hypernet> net;
    try {
        net = load_hypernet(checkpoint);
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    }
    std::filesystem::create_directories(out_dir);
    std::string cache_dir = out_dir + "/references";
    std::filesystem::create_directories(cache_dir);

    RunConfig run;
    run.set("command", "eval");
    run.set("checkpoint", checkpoint);
    run.set("benchmarks", benchmarks);
    run.set("rounds", rounds_csv);
    run.set("eval_res", static_cast<long long>(eval_res));

    std::vector<EvalGrids> grids;
    std::vector<EvalRow> rows = evaluate_model(*net, ids, rounds, eval_res, cache_dir, &grids);

    MetricLog csv(out_dir + "/metrics.csv", "benchmark,rounds,mse,smape,wall_ms", run.echo());
    json jrows = json::array();
    for (const auto& r : rows) {
        csv.row(r.benchmark + "," + std::to_string(r.rounds) + "," + csv_num(r.mse) + "," +
                csv_num(r.smape) + "," + csv_num(r.wall_ms));
        jrows.push_back({{"benchmark", r.benchmark},
                         {"rounds", r.rounds},
                         {"mse", r.mse},
                         {"smape", r.smape},
                         {"wall_ms", r.wall_ms},
                         {"relative_error", r.relative_error}});
        std::cout << r.benchmark << " rounds=" << r.rounds << " mse=" << r.mse
                  << " smape=" << r.smape << "\n";
    }
    json doc;
    doc["config"] = run.to_json();
    doc["rows"] = jrows;
    std::ofstream jf(out_dir + "/metrics.json");
    jf << doc.dump(2) << "\n";

    for (const auto& g : grids) {
        GridFile gf;
        gf.side = g.resolution;
        gf.channels = 1;
        gf.data = g.prediction;
        save_grid_file(
            out_dir + "/solution_" + g.benchmark + "_r" + std::to_string(g.rounds) + ".grid", gf);
    }
    return kExitOk;
}

int cmd_finetune(const std::string& benchmark, const std::string& init, int steps, double lr,
                 double lr_min, std::uint64_t seed, int interior_points,
                 const std::string& out_dir) {
    BenchmarkSpec spec;
    try {
        spec = build_benchmark(benchmark);
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }
    std::filesystem::create_directories(out_dir);

    PinnParams theta0;
    if (init == "random") {
        Rng rng(seed + 17);
        theta0 = PinnParams::random_init(PinnArchitecture{}, rng, 0.1);
    } else if (init.rfind("checkpoint:", 0) == 0) {
        std::unique_ptr<Hypernet> net;
        try {
            net = load_hypernet(init.substr(11));
        } catch (const IoError& e) {
            std::cerr << e.what() << "\n";
            return kExitIo;
        }
        theta0 = net->generate(rasterize(spec.instance, net->config().resolution),
                               spec.instance.coeffs);
    } else {
        std::cerr << "--init must be 'random' or 'checkpoint:PATH'\n";
        return kExitConfig;
    }

    RunConfig run;
    run.set("command", "finetune");
    run.set("benchmark", benchmark);
    run.set("init", init);
    run.set("steps", static_cast<long long>(steps));
    run.set("lr", lr);
    run.set("lr_min", lr_min);
    run.set("seed", static_cast<long long>(seed));
    run.set("interior_points", static_cast<long long>(interior_points));

    FinetuneConfig cfg;
    cfg.steps = steps;
    cfg.lr_max = lr;
    cfg.lr_min = lr_min;
    cfg.seed = seed;
    cfg.collocation.interior = interior_points;
    cfg.metrics_path = out_dir + "/finetune_" + benchmark + ".csv";
    cfg.config_echo = run.echo();

    FinetuneResult result = finetune_pinn(theta0, spec.instance, cfg);
    save_pinn(out_dir + "/pinn_" + benchmark + ".params", result.params);
    if (result.diverged) {
        std::cerr << "fine-tuning diverged; partial artifacts retained\n";
        return kExitDiverged;
    }
    if (!result.curve.empty()) {
        std::cout << "final loss " << result.curve.back().loss;
        if (result.curve.back().mse >= 0) std::cout << ", final mse " << result.curve.back().mse;
        std::cout << "\n";
    }
    return kExitOk;
}

int cmd_selfcheck(std::uint64_t seed, bool inject_fault) {
    auto reports = run_selfcheck(seed, inject_fault);
    bool all = true;
    for (const auto& r : reports) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.checked
                  << " checks, " << r.failed << " failures)\n";
        all = all && r.passed;
    }
    return all ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-PDE weight-generation pipeline"};
    app.set_config("--config", "", "plain key=value configuration file");
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "sample a dataset of PDE instances");
    int gd_count = 100;
    double gd_frac = 0.5;
    std::uint64_t gd_seed = 0;
    int gd_res = 64;
    std::string gd_out = "dataset.bin";
    gen->add_option("--count", gd_count)->envname("HYPINO_COUNT");
    gen->add_option("--supervised-frac", gd_frac)->envname("HYPINO_SUPERVISED_FRAC");
    gen->add_option("--seed", gd_seed)->envname("HYPINO_SEED");
    gen->add_option("--resolution", gd_res)->envname("HYPINO_RESOLUTION");
    gen->add_option("--out", gd_out)->envname("HYPINO_OUT");

    auto* tr = app.add_subcommand("train", "train the hypernetwork");
    int tr_batches = 3000, tr_bs = 8, tr_phase1 = -1, tr_interior = 64, tr_boundary = 32;
    double tr_lr = 1e-4, tr_lrmin = 1e-6, tr_clip = 1.0, tr_slope = -1, tr_srcbound = -1,
           tr_probebound = -1;
    std::uint64_t tr_seed = 0;
    int tr_res = 32;
    std::string tr_out = "runs/train";
    bool tr_laplace = false, tr_square = false;
    tr->add_option("--batches", tr_batches)->envname("HYPINO_BATCHES");
    tr->add_option("--batch-size", tr_bs)->envname("HYPINO_BATCH_SIZE");
    tr->add_option("--phase1-batches", tr_phase1)->envname("HYPINO_PHASE1_BATCHES");
    tr->add_option("--lr", tr_lr)->envname("HYPINO_LR");
    tr->add_option("--lr-min", tr_lrmin)->envname("HYPINO_LR_MIN");
    tr->add_option("--seed", tr_seed)->envname("HYPINO_SEED");
    tr->add_option("--resolution", tr_res)->envname("HYPINO_RESOLUTION");
    tr->add_option("--grad-clip", tr_clip)->envname("HYPINO_GRAD_CLIP");
    tr->add_option("--interior-points", tr_interior)->envname("HYPINO_INTERIOR_POINTS");
    tr->add_option("--boundary-points", tr_boundary)->envname("HYPINO_BOUNDARY_POINTS");
    tr->add_option("--out", tr_out)->envname("HYPINO_OUT");
    tr->add_flag("--laplace-only", tr_laplace, "restrict operators to the Laplacian");
    tr->add_flag("--full-square", tr_square, "domains without inner boundaries");
    tr->add_option("--mms-slope-limit", tr_slope, "override the MMS inner-slope range");
    tr->add_option("--source-bound", tr_srcbound, "resample supervised sources above this bound");
    tr->add_option("--mms-probe-bound", tr_probebound,
                   "resample manufactured solutions above this bound");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the benchmark set");
    std::string ev_ckpt, ev_bench = "all", ev_rounds = "0,3,10", ev_out = "runs/eval";
    int ev_res = 128;
    ev->add_option("--checkpoint", ev_ckpt)->required()->envname("HYPINO_CHECKPOINT");
    ev->add_option("--benchmarks", ev_bench)->envname("HYPINO_BENCHMARKS");
    ev->add_option("--rounds", ev_rounds)->envname("HYPINO_ROUNDS");
    ev->add_option("--eval-res", ev_res)->envname("HYPINO_EVAL_RES");
    ev->add_option("--out", ev_out)->envname("HYPINO_OUT");

    auto* ft = app.add_subcommand("finetune", "fine-tune a single PINN on a benchmark");
    std::string ft_bench = "HT", ft_init = "random", ft_out = "runs/finetune";
    int ft_steps = 10000, ft_interior = 256;
    double ft_lr = 1e-4, ft_lrmin = 1e-7;
    std::uint64_t ft_seed = 0;
    ft->add_option("--benchmark", ft_bench)->envname("HYPINO_BENCHMARK");
    ft->add_option("--init", ft_init)->envname("HYPINO_INIT");
    ft->add_option("--steps", ft_steps)->envname("HYPINO_STEPS");
    ft->add_option("--lr", ft_lr)->envname("HYPINO_LR");
    ft->add_option("--lr-min", ft_lrmin)->envname("HYPINO_LR_MIN");
    ft->add_option("--seed", ft_seed)->envname("HYPINO_SEED");
    ft->add_option("--interior-points", ft_interior)->envname("HYPINO_INTERIOR_POINTS");
    ft->add_option("--out", ft_out)->envname("HYPINO_OUT");

    auto* sc = app.add_subcommand("selfcheck", "run the built-in oracle suites");
    std::uint64_t sc_seed = 0;
    bool sc_fault = false;
    sc->add_option("--seed", sc_seed)->envname("HYPINO_SEED");
    sc->add_flag("--inject-fault", sc_fault,
                 "perturb the quantities under test; the suites must fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd_count, gd_frac, gd_seed, gd_res, gd_out);
        if (tr->parsed())
            return cmd_train(tr_batches, tr_bs, tr_phase1, tr_lr, tr_lrmin, tr_seed, tr_res,
                             tr_clip, tr_interior, tr_boundary, tr_out, tr_laplace, tr_square,
                             tr_slope, tr_srcbound, tr_probebound);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_bench, ev_rounds, ev_res, ev_out);
        if (ft->parsed())
            return cmd_finetune(ft_bench, ft_init, ft_steps, ft_lr, ft_lrmin, ft_seed,
                                ft_interior, ft_out);
        if (sc->parsed()) return cmd_selfcheck(sc_seed, sc_fault);
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
