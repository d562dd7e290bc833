#include "trajrep/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "trajrep/checkpoint.hpp"
#include "trajrep/report.hpp"

namespace trajrep {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << content;
}

void write_config_echo(const ExperimentConfig& config, const std::string& out_dir) {
    write_text(out_dir + "/config_echo.txt", config.echo());
}

TrajModel build_model(const ExperimentConfig& config, const Pipeline& pipe, TrajModel::Head head,
                      int task_outputs) {
    const ModelConfig mc = config.model_config();
    return TrajModel(mc, static_cast<int>(pipe.ctx.features.cols()),
                     pipe.network.vertex_count(), head, task_outputs,
                     Rng(config.seed()).derive("init"));
}

std::vector<int> task_labels(const ExperimentConfig& config, const TrajectoryDataset& data,
                             int* num_classes) {
    const std::string source = config.get("task.label_source");
    std::vector<int> labels;
    if (source == "label") {
        for (const auto& t : data.trajectories) {
            if (!t.label) {
                throw ValidationError("trajectory " + t.traj_id + " has no label field");
            }
            labels.push_back(static_cast<int>(*t.label));
        }
    } else if (source == "user") {
        std::set<std::string> users;
        for (const auto& t : data.trajectories) users.insert(t.user_id);
        std::map<std::string, int> index;
        for (const auto& u : users) index.emplace(u, static_cast<int>(index.size()));
        for (const auto& t : data.trajectories) labels.push_back(index.at(t.user_id));
    } else {
        throw ConfigError("task.label_source must be 'label' or 'user'");
    }
    int configured = static_cast<int>(config.get_long("task.num_classes"));
    if (configured <= 0) {
        int mx = 1;
        for (int l : labels) mx = std::max(mx, l + 1);
        configured = std::max(mx, 2);
    }
    *num_classes = configured;
    return labels;
}

} // namespace

std::unique_ptr<Pipeline> load_pipeline(const ExperimentConfig& config) {
    auto pipe = std::make_unique<Pipeline>();
    pipe->network = load_road_network(config.get("data.nodes_path"), config.get("data.edges_path"));
    TrajectoryDataset raw = load_corpus_jsonl(config.get("data.corpus_path"), pipe->network);
    pipe->corpus = preprocess(raw, static_cast<int>(config.get_long("data.min_user_trajectories")));
    pipe->splits = chronological_split(pipe->corpus, config.split_ratios());
    pipe->transfer = compute_transfer_probabilities(pipe->network, pipe->splits.train.trajectories);
    pipe->hist = historical_travel_times(pipe->splits.train);
    pipe->ctx = NetworkContext::build(pipe->network, pipe->transfer);
    return pipe;
}

int cmd_generate(const ExperimentConfig& config, const std::string& out_dir) {
    ensure_dir(out_dir);
    const SyntheticConfig sc = config.synthetic_config();
    RoadNetwork network = generate_synthetic_network(sc.grid_n, config.seed());
    TrajectoryDataset corpus =
        generate_synthetic_trajectories(network, sc.trajectory_count, config.seed(), sc);
    save_road_network(network, out_dir + "/nodes.csv", out_dir + "/edges.csv");
    save_corpus_jsonl(corpus, out_dir + "/corpus.jsonl");
    write_config_echo(config, out_dir);
    std::cout << "generated " << network.vertex_count() << " roads, "
              << corpus.trajectories.size() << " trajectories\n";
    return 0;
}

int cmd_pretrain(const ExperimentConfig& config, const std::string& out_dir) {
    ensure_dir(out_dir);
    auto pipe = load_pipeline(config);
    TrajModel model = build_model(config, *pipe, TrajModel::Head::masked_recovery, 0);
    const PretrainConfig pc = config.pretrain_config();
    AdamW opt(model.store(), pc.weight_decay);

    std::vector<std::string> log_lines;
    PretrainResult result = run_pretraining(model, opt, pipe->ctx, pipe->splits.train,
                                            &pipe->splits.val, pc, config.ablations(), pipe->hist,
                                            &log_lines);

    Checkpoint ckpt = make_checkpoint(model.store(), &opt, config.echo(), config.seed(),
                                      pc.epochs);
    save_checkpoint(ckpt, out_dir + "/checkpoint.bin");

    std::string log_text;
    for (const auto& line : log_lines) log_text += line + "\n";
    write_text(out_dir + "/pretrain_log.txt", log_text);

    MetricsReport report;
    report.task = "pretrain";
    report.values["val_masked_accuracy"] = result.val_masked_accuracy;
    if (!result.epochs.empty()) {
        report.values["final_loss_pre"] = result.epochs.back().loss_pre;
        report.values["final_loss_mask"] = result.epochs.back().loss_mask;
        report.values["final_loss_con"] = result.epochs.back().loss_con;
    }
    write_metrics_text(report, out_dir + "/metrics.txt");
    write_metrics_json(report, out_dir + "/metrics.json", config.echo());
    write_config_echo(config, out_dir);
    std::cout << "pretrained " << pc.epochs << " epochs, val masked accuracy "
              << result.val_masked_accuracy << "\n";
    return 0;
}

int cmd_finetune(const ExperimentConfig& config, const std::string& task,
                 const std::string& checkpoint_path, const std::string& out_dir) {
    ensure_dir(out_dir);
    auto pipe = load_pipeline(config);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const FinetuneConfig fc = config.finetune_config();
    const Ablations abl = config.ablations();
    std::vector<std::string> log_lines;
    MetricsReport report;

    if (task == "eta") {
        TrajModel model = build_model(config, *pipe, TrajModel::Head::task, 1);
        apply_checkpoint_params(ckpt, model.store(), /*strict=*/true);
        EtaModel eta = finetune_eta(std::move(model), pipe->ctx, pipe->splits.train, fc, abl,
                                    &log_lines);

        std::vector<double> y;
        for (const auto& t : pipe->splits.test.trajectories) {
            y.push_back(static_cast<double>(t.duration()));
        }
        const std::vector<double> y_hat =
            predict_eta(eta, pipe->ctx, pipe->splits.test.trajectories, abl);
        report = regression_metrics(y, y_hat);
        report.task = "eta";

        double train_mean = 0.0;
        for (const auto& t : pipe->splits.train.trajectories) {
            train_mean += static_cast<double>(t.duration());
        }
        train_mean /= static_cast<double>(pipe->splits.train.trajectories.size());
        double baseline_mae = 0.0;
        for (double v : y) baseline_mae += std::abs(v - train_mean);
        baseline_mae /= static_cast<double>(y.size());
        report.values["baseline_mean_MAE"] = baseline_mae;

        Checkpoint out_ckpt = make_checkpoint(eta.model.store(), nullptr, config.echo(),
                                              config.seed(), fc.epochs);
        save_checkpoint(out_ckpt, out_dir + "/checkpoint.bin");
    } else if (task == "classify") {
        int num_classes = 0;
        const std::vector<int> train_labels = task_labels(config, pipe->splits.train, &num_classes);
        TrajModel model = build_model(config, *pipe, TrajModel::Head::task, num_classes);
        apply_checkpoint_params(ckpt, model.store(), /*strict=*/true);
        ClassifyModel cls = finetune_classify(std::move(model), pipe->ctx, pipe->splits.train,
                                              train_labels, num_classes, fc, abl, &log_lines);

        int test_classes = 0;
        const std::vector<int> test_labels = task_labels(config, pipe->splits.test, &test_classes);
        const Mat probs = classify(cls, pipe->ctx, pipe->splits.test.trajectories, abl);
        report = classification_metrics(test_labels, probs);

        Checkpoint out_ckpt = make_checkpoint(cls.model.store(), nullptr, config.echo(),
                                              config.seed(), fc.epochs);
        save_checkpoint(out_ckpt, out_dir + "/checkpoint.bin");
    } else {
        throw ConfigError("unknown finetune task '" + task + "' (expected eta or classify)");
    }

    std::string log_text;
    for (const auto& line : log_lines) log_text += line + "\n";
    write_text(out_dir + "/finetune_log.txt", log_text);
    write_metrics_text(report, out_dir + "/metrics.txt");
    write_metrics_json(report, out_dir + "/metrics.json", config.echo());
    write_config_echo(config, out_dir);
    for (const auto& [k, v] : report.values) std::cout << k << "=" << v << "\n";
    return 0;
}

int cmd_embed(const ExperimentConfig& config, const std::string& checkpoint_path,
              const std::string& out_dir) {
    ensure_dir(out_dir);
    auto pipe = load_pipeline(config);
    TrajModel model = build_model(config, *pipe, TrajModel::Head::none, 0);
    apply_checkpoint_params(load_checkpoint(checkpoint_path), model.store(), /*strict=*/true);

    const Mat reps = model.embed(pipe->ctx, pipe->corpus.trajectories, config.ablations());
    std::ofstream out(out_dir + "/embeddings.tsv");
    if (!out) throw ParseError("cannot open for writing: " + out_dir + "/embeddings.tsv");
    out << "d=" << model.config().d << "\n";
    for (std::size_t i = 0; i < pipe->corpus.trajectories.size(); ++i) {
        out << pipe->corpus.trajectories[i].traj_id << "\t";
        for (Index j = 0; j < reps.cols(); ++j) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.9g", reps(static_cast<Index>(i), j));
            out << (j ? " " : "") << buf;
        }
        out << "\n";
    }
    write_config_echo(config, out_dir);
    std::cout << "embedded " << pipe->corpus.trajectories.size() << " trajectories\n";
    return 0;
}

int cmd_eval_sim(const ExperimentConfig& config, const std::string& checkpoint_path,
                 const std::string& out_dir) {
    ensure_dir(out_dir);
    auto pipe = load_pipeline(config);
    TrajModel model = build_model(config, *pipe, TrajModel::Head::none, 0);
    apply_checkpoint_params(load_checkpoint(checkpoint_path), model.store(), /*strict=*/true);

    DetourQuerySet qs = build_query_sets(pipe->splits.test,
                                         static_cast<int>(config.get_long("sim.n_q")),
                                         static_cast<int>(config.get_long("sim.n_neg")),
                                         config.detour_params(), pipe->network, pipe->hist,
                                         config.seed());
    save_query_set_jsonl(qs, out_dir + "/queryset.jsonl", out_dir + "/manifest.json");

    const Ablations abl = config.ablations();
    const Mat query_reps = model.embed(pipe->ctx, qs.queries, abl);
    const Mat db_reps = model.embed(pipe->ctx, qs.database, abl);

    MetricsReport report = most_similar_eval(query_reps, db_reps, qs.truth);
    report.task = "similarity";
    std::vector<Trajectory> detoured_queries;
    for (std::size_t i = 0; i < qs.queries.size(); ++i) {
        detoured_queries.push_back(qs.database[static_cast<std::size_t>(qs.truth[i])]);
    }
    const Mat detour_reps = model.embed(pipe->ctx, detoured_queries, abl);
    const int knn_k = static_cast<int>(config.get_long("sim.knn_k"));
    for (const auto& [k, v] : knn_eval(query_reps, detour_reps, db_reps, knn_k).values) {
        report.values[k] = v;
    }

    write_metrics_text(report, out_dir + "/metrics.txt");
    write_metrics_json(report, out_dir + "/metrics.json", config.echo());
    write_config_echo(config, out_dir);
    for (const auto& [k, v] : report.values) std::cout << k << "=" << v << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& metrics_files, const std::string& loss_log,
               const std::string& out_dir) {
    ensure_dir(out_dir);
    std::vector<RunMetrics> runs;
    std::set<std::string> metrics;
    for (const auto& f : metrics_files) {
        runs.push_back(load_metrics_json(f));
        for (const auto& [k, v] : runs.back().values) metrics.insert(k);
    }
    if (!runs.empty()) {
        write_text(out_dir + "/summary.txt", summary_table(runs));
        for (const auto& m : metrics) {
            std::string slug = m;
            for (char& c : slug) {
                if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
            }
            write_bar_chart_svg(m, runs, out_dir + "/chart_" + slug + ".svg");
        }
    }
    if (!loss_log.empty()) {
        std::ifstream in(loss_log);
        if (!in) throw ParseError("cannot open loss log: " + loss_log);
        std::vector<double> losses;
        std::string line;
        while (std::getline(in, line)) {
            const std::size_t at = line.find("loss_pre ");
            if (at != std::string::npos) losses.push_back(std::stod(line.substr(at + 9)));
        }
        if (!losses.empty()) {
            write_line_chart_svg("pretraining loss", losses, out_dir + "/loss_curve.svg");
        }
    }
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"self-supervised trajectory representation learning over road networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    long seed = -1;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "configuration file (key = value lines)");
    app.add_option("--seed", seed, "root random seed (overrides config)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--set", overrides, "override a config key, e.g. --set train.epochs=5");

    auto* c_generate = app.add_subcommand("generate", "write a synthetic network and corpus");
    auto* c_pretrain = app.add_subcommand("pretrain", "run self-supervised pretraining");
    auto* c_finetune = app.add_subcommand("finetune", "fine-tune a pretrained checkpoint");
    auto* c_embed = app.add_subcommand("embed", "export trajectory representations");
    auto* c_evalsim = app.add_subcommand("eval-sim", "run the detour similarity benchmark");
    auto* c_report = app.add_subcommand("report", "summarize metrics files into charts");

    std::string task;
    c_finetune->add_option("--task", task, "eta or classify")->required();
    std::string checkpoint_path;
    for (CLI::App* sub : {c_finetune, c_embed, c_evalsim}) {
        sub->add_option("--checkpoint", checkpoint_path, "input checkpoint")->required();
    }
    std::vector<std::string> metrics_files;
    std::string loss_log;
    c_report->add_option("files", metrics_files, "metrics JSON files");
    c_report->add_option("--loss-log", loss_log, "pretraining log for a loss curve");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        ExperimentConfig config = ExperimentConfig::defaults();
        if (!config_path.empty()) config.load_file(config_path);
        for (const auto& kv : overrides) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
            config.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed >= 0) config.set("seed", std::to_string(seed));

        if (app.got_subcommand(c_generate)) return cmd_generate(config, out_dir);
        if (app.got_subcommand(c_pretrain)) return cmd_pretrain(config, out_dir);
        if (app.got_subcommand(c_finetune)) {
            return cmd_finetune(config, task, checkpoint_path, out_dir);
        }
        if (app.got_subcommand(c_embed)) return cmd_embed(config, checkpoint_path, out_dir);
        if (app.got_subcommand(c_evalsim)) return cmd_eval_sim(config, checkpoint_path, out_dir);
        if (app.got_subcommand(c_report)) return cmd_report(metrics_files, loss_log, out_dir);
        std::cerr << "no command given\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace trajrep
