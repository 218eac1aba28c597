// Command-line front end: dataset synthesis, training, evaluation, proposal
// map export, gradient checking, and the transfer-matrix benchmark.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spn/spn.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckFailed = 4;

struct SynthArgs {
    std::string out;
    spn::SynthConfig cfg;
};

int run_synth(const SynthArgs& args) {
    const spn::SynthSplits splits = spn::generate_dataset(args.cfg);
    const std::filesystem::path root(args.out);
    spn::save_dataset(splits.train, root / "train");
    spn::save_dataset(splits.test, root / "test");
    std::cout << "wrote " << splits.train.samples.size() << " train / " << splits.test.samples.size()
              << " test samples to " << root.string() << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string out;
    spn::OptimizerConfig opt;
    bool no_sp = false;
    std::string loss_mode = "softmax";
};

int run_train(const TrainArgs& args) {
    const spn::Dataset train_ds = spn::load_dataset(std::filesystem::path(args.data) / "train");

    spn::NetworkSpec spec = spn::reference_network_spec(train_ds.class_names.size());
    spec.sp_force_uniform = args.no_sp;
    if (args.loss_mode == "softmax")
        spec.loss_mode = spn::LossMode::softmax_cross_entropy;
    else if (args.loss_mode == "sigmoid")
        spec.loss_mode = spn::LossMode::per_class_sigmoid;
    else
        throw spn::ConfigError("train: --loss must be softmax or sigmoid");

    spn::Network net = spn::make_network(spec, args.opt.seed);
    spn::SgdState state = spn::SgdState::zeros_like(net);
    const auto data = spn::to_labeled_images(train_ds);
    const spn::TrainResult result = spn::train(net, data, args.opt, &state, &std::cout);

    spn::TrainingSummary summary;
    if (!result.log.empty()) {
        const auto& last = result.log.back();
        summary.epochs_run = static_cast<int>(result.log.size());
        summary.final_loss = last.mean_loss;
        summary.final_accuracy = last.accuracy;
        summary.mean_walk_iterations = last.mean_walk_iterations;
    }
    spn::save_checkpoint(net, args.opt, &state, summary, args.out);
    std::cout << "saved checkpoint to " << args.out << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string data;
    std::string model;
    std::string split = "test";
    std::string metrics = "cls,pointing,corloc,energy";
    int tolerance_px = 3;
};

int run_eval(const EvalArgs& args) {
    const spn::Dataset ds = spn::load_dataset(std::filesystem::path(args.data) / args.split);
    spn::LoadedCheckpoint ckpt = spn::load_checkpoint(args.model);

    spn::EvalOptions opt;
    opt.classification = opt.pointing = opt.corloc = opt.energy = false;
    std::stringstream ss(args.metrics);
    std::string metric;
    while (std::getline(ss, metric, ',')) {
        if (metric == "cls") opt.classification = true;
        else if (metric == "pointing") opt.pointing = true;
        else if (metric == "corloc") opt.corloc = true;
        else if (metric == "energy") opt.energy = true;
        else throw spn::ConfigError("eval: unknown metric '" + metric + "'");
    }
    opt.tolerance_px = args.tolerance_px;

    const spn::EvalReport report = spn::evaluate(ckpt.net, ds, opt);
    spn::print_report(report, ds.class_names, opt, std::cout);
    return kExitOk;
}

struct ProposeArgs {
    std::string model;
    std::string image;
    std::string out_png;
    std::string out_csv;
};

int run_propose(const ProposeArgs& args) {
    spn::LoadedCheckpoint ckpt = spn::load_checkpoint(args.model);
    const spn::Image8 img = spn::read_png(args.image);
    if (img.channels != 3) throw spn::DataError("propose: image must be RGB");

    spn::AnnotatedSample sample;
    sample.width = img.width;
    sample.height = img.height;
    sample.rgb = img.pixels;
    const spn::Tensor3 input = sample.to_input();

    const spn::ForwardCache cache = spn::spn_forward(ckpt.net, input);
    if (!cache.sp_active) throw spn::ConfigError("propose: the model has no soft-proposal layer");
    const spn::Grid up = spn::upscale_map(cache.proposal.data, img.height, img.width);
    if (!args.out_png.empty()) spn::emit_heatmap(up, args.out_png);
    if (!args.out_csv.empty()) spn::emit_csv(up, args.out_csv);
    std::cout << "walk iterations=" << cache.proposal.iterations << " residual=" << cache.proposal.residual
              << "\n";
    return kExitOk;
}

int run_gradcheck(std::uint64_t seed, double tolerance) {
    spn::Network net = spn::make_network(spn::tiny_network_spec(), seed);
    spn::Rng rng(500 + seed);
    spn::Tensor3 image(net.spec.in_channels, net.spec.in_height, net.spec.in_width);
    for (double& x : image.v) x = rng.uniform();
    const std::vector<int> labels{static_cast<int>(seed % net.spec.class_count)};

    const auto report = spn::oracles::check_gradients(net, image, labels, tolerance);
    for (const auto& t : report.tensors)
        std::cout << "tensor " << t.tensor << " max_rel_error=" << t.max_rel_error << "\n";
    std::cout << "gradcheck tolerance=" << report.tolerance << " max_rel_error=" << report.max_rel_error()
              << " " << (report.pass ? "PASS" : "FAIL") << "\n";
    return report.pass ? kExitOk : kExitCheckFailed;
}

int run_bench(std::size_t k, std::size_t n, int walk_iters) {
    spn::Rng rng(0);
    spn::FeatureMaps u(k, n, n);
    for (double& x : u.v) x = rng.uniform();

    spn::SpConfig cfg;
    cfg.max_iters = walk_iters;
    cfg.convergence_tol = 1e-300; // run exactly walk_iters steps

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const spn::TransferMatrix d = spn::build_transfer_matrix(u, cfg);
    const auto t1 = clock::now();
    const spn::ProposalMap m = spn::random_walk(d, cfg);
    const auto t2 = clock::now();

    const auto ms = [](auto a, auto b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };
    std::cout << "build_transfer_matrix ms=" << ms(t0, t1) << "\n";
    std::cout << "random_walk iters=" << m.iterations << " ms=" << ms(t1, t2) << "\n";
    std::cout << "total ms=" << ms(t0, t2) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Soft-proposal network tool"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic shapes dataset");
    synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
    synth_cmd->add_option("--size", synth.cfg.image_size, "Image size in pixels");
    synth_cmd->add_option("--classes", synth.cfg.class_count, "Number of classes (1..3)");
    synth_cmd->add_option("--train", synth.cfg.train_count, "Training sample count");
    synth_cmd->add_option("--test", synth.cfg.test_count, "Test sample count");
    synth_cmd->add_option("--clutter", synth.cfg.clutter_level, "Background clutter level in [0,1]");
    synth_cmd->add_option("--co-occur", synth.cfg.co_occur_prob, "Distractor co-occurrence probability");
    synth_cmd->add_flag("--multi-label", synth.cfg.multi_label, "Two shapes per image");
    synth_cmd->add_option("--seed", synth.cfg.seed, "Generator seed");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train the reference network");
    train_cmd->add_option("--data", train.data, "Dataset directory (with train/ and test/)")->required();
    train_cmd->add_option("--out", train.out, "Checkpoint output path")->required();
    train_cmd->add_option("--epochs", train.opt.epochs, "Training epochs");
    train_cmd->add_option("--lr", train.opt.learning_rate, "Learning rate");
    train_cmd->add_option("--momentum", train.opt.momentum, "SGD momentum");
    train_cmd->add_option("--weight-decay", train.opt.weight_decay, "Weight decay");
    train_cmd->add_option("--batch", train.opt.batch_size, "Mini-batch size");
    train_cmd->add_option("--seed", train.opt.seed, "Initialization/shuffle seed");
    train_cmd->add_flag("--no-sp", train.no_sp, "Ablation: force the proposal map uniform");
    train_cmd->add_option("--loss", train.loss_mode, "softmax | sigmoid");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
    eval_cmd->add_option("--model", eval.model, "Checkpoint path")->required();
    eval_cmd->add_option("--split", eval.split, "Dataset split (train|test)");
    eval_cmd->add_option("--metrics", eval.metrics, "Comma list: cls,pointing,corloc,energy");
    eval_cmd->add_option("--tolerance-px", eval.tolerance_px, "Pointing tolerance in pixels");

    ProposeArgs propose;
    auto* propose_cmd = app.add_subcommand("propose", "Emit the proposal map for an image");
    propose_cmd->add_option("--model", propose.model, "Checkpoint path")->required();
    propose_cmd->add_option("--image", propose.image, "Input PNG")->required();
    propose_cmd->add_option("--out-png", propose.out_png, "Heatmap PNG path");
    propose_cmd->add_option("--out-csv", propose.out_csv, "Raw values CSV path");

    std::uint64_t gradcheck_seed = 3;
    double gradcheck_tol = 1e-6;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Frozen-M gradient check on the tiny net");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "Seed");
    gradcheck_cmd->add_option("--tolerance", gradcheck_tol, "Relative error tolerance");

    std::size_t bench_k = 512, bench_n = 14;
    int bench_iters = 10;
    auto* bench_cmd = app.add_subcommand("bench", "Time transfer-matrix build and walk");
    bench_cmd->add_option("--k", bench_k, "Feature channels");
    bench_cmd->add_option("--n", bench_n, "Grid size N");
    bench_cmd->add_option("--walk-iters", bench_iters, "Walk iterations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (train_cmd->parsed()) return run_train(train);
        if (eval_cmd->parsed()) return run_eval(eval);
        if (propose_cmd->parsed()) return run_propose(propose);
        if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck_seed, gradcheck_tol);
        if (bench_cmd->parsed()) return run_bench(bench_k, bench_n, bench_iters);
    } catch (const spn::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const spn::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const spn::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const spn::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
