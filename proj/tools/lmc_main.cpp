#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "lmc.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON experiment config");
    cmd->add_option("--seed", args.seed, "override config seed");
    cmd->add_option("--out", args.out, "override output directory");
}

lmc::ExperimentConfig load_config(const CommonArgs& args) {
    lmc::ExperimentConfig c;
    if (!args.config_path.empty()) c = lmc::parse_config_file(args.config_path);
    if (args.seed) c.seed = *args.seed;
    if (args.out) c.out_dir = *args.out;
    lmc::validate(c);
    return c;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw lmc::IoError("cannot create directory: " + dir);
}

int run_train_offline(const CommonArgs& args) {
    lmc::ExperimentConfig c = load_config(args);
    auto stream = lmc::make_stream(c, c.seed);
    lmc::Rng root(c.seed);
    lmc::Rng init_rng = root.fork(lmc::engine_detail::kInitStream);
    lmc::Rng train_rng = root.fork(lmc::engine_detail::kTrainStream);
    lmc::Network net = lmc::train_offline(c, stream.front(), init_rng, train_rng);
    ensure_dir(c.out_dir);
    std::string path = c.out_dir + "/offline.lmcw";
    lmc::save_checkpoint(net, path);
    std::cout << path << "\n";
    std::cout << "task1_test_acc=" << lmc::g9(lmc::evaluate(net, stream.front())) << "\n";
    return 0;
}

int run_continual(const CommonArgs& args) {
    lmc::ExperimentConfig c = load_config(args);
    lmc::RunReport report = lmc::run_stream(c);
    lmc::emit_report(report, c.out_dir);
    if (report.failed) {
        std::cerr << "run failed: " << report.error << "\n";
        return 2;
    }
    std::cout << c.out_dir << "/report.json\n";
    const lmc::TaskResult& last = report.tasks.back();
    std::cout << "AA=" << lmc::g9(last.aa) << "\n";
    std::cout << "AF=" << (last.af ? lmc::g9(*last.af) : std::string("NA")) << "\n";
    return 0;
}

int run_scan(const CommonArgs& args, const std::string& path_a, const std::string& path_b,
             int task) {
    lmc::ExperimentConfig c = load_config(args);
    if (task < 2 || task > c.tasks)
        throw lmc::ConfigError("scan --task must lie in [2, stream.tasks]");
    lmc::Network net_a = lmc::load_checkpoint(path_a);
    lmc::Network net_b = lmc::load_checkpoint(path_b);
    auto stream = lmc::make_stream(c, c.seed);
    std::vector<lmc::Batch> prev_sets;
    for (int k = 1; k < task; ++k)
        prev_sets.push_back(stream[static_cast<std::size_t>(k - 1)].test);
    lmc::PathScan scan =
        lmc::scan(net_a, net_a.flatten(), net_b.flatten(), lmc::uniform_grid(c.scan_points),
                  prev_sets, stream[static_cast<std::size_t>(task - 1)].test);
    ensure_dir(c.out_dir);
    std::string path = c.out_dir + "/scan.csv";
    lmc::save_scan_csv(scan, path);
    std::cout << path << "\n";
    return 0;
}

int run_merge(const CommonArgs& args, const std::string& path_a, const std::string& path_b,
              int t) {
    if (t < 2) throw lmc::ConfigError("merge --t must be >= 2");
    lmc::Network net_a = lmc::load_checkpoint(path_a);
    lmc::Network net_b = lmc::load_checkpoint(path_b);
    lmc::WeightVector merged = lmc::merge_running(net_a.flatten(), net_b.flatten(), t);
    net_a.set_weights(merged);
    std::string dir = args.out ? *args.out : std::string("out");
    ensure_dir(dir);
    std::string path = dir + "/merged.lmcw";
    lmc::save_checkpoint(net_a, path);
    std::cout << path << "\n";
    return 0;
}

int run_metrics(const std::string& matrix_path) {
    lmc::AccuracyMatrix B = lmc::load_matrix_csv(matrix_path);
    int t = B.task_count();
    if (t < 1 || !B.row_complete(t)) throw lmc::IoError("matrix has no complete final row");
    std::cout << "AA=" << lmc::g9(lmc::average_accuracy(B, t)) << "\n";
    std::cout << "AF=" << (t > 1 ? lmc::g9(lmc::average_forgetting(B, t)) : std::string("NA"))
              << "\n";
    return 0;
}

int run_datagen(const CommonArgs& args, const std::string& format) {
    lmc::ExperimentConfig c = load_config(args);
    if (format != "clds" && format != "csv")
        throw lmc::ConfigError("datagen --format must be clds or csv");
    auto stream = lmc::make_stream(c, c.seed);
    ensure_dir(c.out_dir);
    for (const auto& task : stream) {
        std::string stem = c.out_dir + "/task" + std::to_string(task.id);
        lmc::save_dataset(task.train, stem + "_train." + format);
        lmc::save_dataset(task.test, stem + "_test." + format);
    }
    std::cout << c.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning engine with linear mode connectivity merging"};
    app.require_subcommand(1);

    CommonArgs offline_args, continual_args, scan_args, merge_args, datagen_args;
    std::string scan_a, scan_b, merge_a, merge_b, matrix_path;
    int scan_task = 2;
    int merge_t = 0;
    std::string datagen_format = "clds";

    CLI::App* offline = app.add_subcommand("train-offline", "Stage 1: offline training on task 1");
    add_common(offline, offline_args);

    CLI::App* continual = app.add_subcommand("continual", "full three-stage stream run");
    add_common(continual, continual_args);

    CLI::App* scan_cmd = app.add_subcommand("scan", "loss/accuracy scan between two checkpoints");
    add_common(scan_cmd, scan_args);
    scan_cmd->add_option("--task", scan_task, "stream task treated as current");
    scan_cmd->add_option("a", scan_a, "first checkpoint")->required();
    scan_cmd->add_option("b", scan_b, "second checkpoint")->required();

    CLI::App* merge = app.add_subcommand("merge", "running average of two checkpoints");
    add_common(merge, merge_args);
    merge->add_option("--t", merge_t, "task count T in the running average")->required();
    merge->add_option("a", merge_a, "running-average checkpoint")->required();
    merge->add_option("b", merge_b, "newly trained checkpoint")->required();

    CLI::App* metrics = app.add_subcommand("metrics", "recompute AA/AF from a matrix.csv");
    metrics->add_option("matrix", matrix_path, "matrix.csv path")->required();

    CLI::App* datagen = app.add_subcommand("datagen", "write the synthetic stream to disk");
    add_common(datagen, datagen_args);
    datagen->add_option("--format", datagen_format, "clds or csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (offline->parsed()) return run_train_offline(offline_args);
        if (continual->parsed()) return run_continual(continual_args);
        if (scan_cmd->parsed()) return run_scan(scan_args, scan_a, scan_b, scan_task);
        if (merge->parsed()) return run_merge(merge_args, merge_a, merge_b, merge_t);
        if (metrics->parsed()) return run_metrics(matrix_path);
        if (datagen->parsed()) return run_datagen(datagen_args, datagen_format);
    } catch (const lmc::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
