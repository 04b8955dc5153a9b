// cqlsepsis: offline CQL training and analysis pipeline.
//
//   cqlsepsis gen-data --seed 7 --patients 500 --out data/
//   cqlsepsis train --config run.cfg --data data/train.csv --out run/
//   cqlsepsis eval --checkpoint run/final.ckpt --data data/test.csv --out run/
//   cqlsepsis plot --out run/
//   cqlsepsis oracle-check --fixture tests/fixtures/toy5.mdp --out oracle/

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cql/checkpoint.hpp"
#include "cql/cohort_sim.hpp"
#include "cql/errors.hpp"
#include "cql/evaluation.hpp"
#include "cql/kv_config.hpp"
#include "cql/oracle.hpp"
#include "cql/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    // gen-data
    std::uint64_t seed = 0;
    std::uint64_t patients = 1000;
    std::string sim_config;
    // fit-bins / train / eval
    std::string data;
    std::string val;
    std::string config;
    std::string checkpoint;
    // oracle-check
    std::string fixture;
    // plot
    std::string in;

    std::string out;
};

void say(const std::string& msg) { std::cout << msg << '\n'; }

int gen_data(const Options& o) {
    cql::SimParams params;
    if (!o.sim_config.empty()) {
        auto cfg = cql::KeyValueConfig::load(o.sim_config);
        params = cql::sim_params_from_config(cfg);
    }
    params.seed = o.seed;
    params.patients = o.patients;
    params.validate();

    cql::SplitSpec spec;
    spec.seed = o.seed;
    const auto gen = cql::generate_dataset(params, spec);

    const fs::path out(o.out);
    fs::create_directories(out);
    cql::save_dataset(gen.split.train, out / "train.csv");
    cql::save_dataset(gen.split.validation, out / "val.csv");
    cql::save_dataset(gen.split.test, out / "test.csv");
    cql::save_binner(gen.binner, out / "binner.txt");
    cql::write_text_file(out / "sim.cfg", cql::sim_params_to_text(params));
    say("wrote " + std::to_string(gen.split.train.size()) + "/" +
        std::to_string(gen.split.validation.size()) + "/" +
        std::to_string(gen.split.test.size()) + " train/val/test rows to " + out.string());
    return 0;
}

int fit_bins(const Options& o) {
    const auto ds = cql::load_dataset(o.data);
    const auto binner = cql::fit_binner(ds);
    const fs::path out(o.out);
    fs::create_directories(out);
    cql::save_binner(binner, out / "binner.txt");
    say("iv cuts " + cql::format_double(binner.iv.q1) + " " + cql::format_double(binner.iv.q2) +
        " " + cql::format_double(binner.iv.q3));
    say("vp cuts " + cql::format_double(binner.vp.q1) + " " + cql::format_double(binner.vp.q2) +
        " " + cql::format_double(binner.vp.q3));
    return 0;
}

int train(const Options& o) {
    cql::TrainConfig config;
    if (!o.config.empty()) config = cql::load_train_config(o.config);
    config.validate();
    auto data = cql::load_dataset(o.data);
    std::optional<cql::OfflineDataset> val;
    if (!o.val.empty()) val = cql::load_dataset(o.val);

    const fs::path out(o.out);
    fs::create_directories(out);
    const auto res = cql::train_pipeline(std::move(data), std::move(val), config, out);
    const auto& last = res.result.metrics.records.back();
    say("step " + std::to_string(last.step) + " loss " + cql::format_double(last.total_loss) +
        " val_loss " + cql::format_double(last.validation_loss));
    say("wrote " + (out / "final.ckpt").string());
    return 0;
}

int eval(const Options& o) {
    const auto ckpt = cql::load_checkpoint(o.checkpoint);
    const auto report = cql::evaluate_checkpoint(ckpt, cql::load_dataset(o.data));
    const auto files = cql::write_evaluation(report, o.out);
    for (std::size_t g = 0; g < report.model.size(); ++g) {
        const auto& m = report.model[g];
        say(std::string(cql::to_string(m.group)) + ": " + std::to_string(m.total) +
            " timesteps, model mean vp_bin " +
            cql::format_double(m.mean_bin(cql::Intervention::VP)) + ", physician mean vp_bin " +
            cql::format_double(report.physician[g].mean_bin(cql::Intervention::VP)));
    }
    say("wrote " + std::to_string(files.size()) + " CSV files to " + o.out);
    return 0;
}

int oracle_check(const Options& o) {
    const auto fixture = cql::load_fixture(o.fixture);
    const auto rep = cql::run_oracle_check(fixture);
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        std::string text = "state,action,q_star,q_enumerated,q_net\n";
        for (std::size_t s = 0; s < rep.q_star.rows(); ++s) {
            for (std::size_t a = 0; a < rep.q_star.cols(); ++a) {
                text += std::to_string(s) + "," + std::to_string(a) + "," +
                        cql::format_double(rep.q_star(s, a)) + "," +
                        cql::format_double(rep.q_enumerated(s, a)) + "," +
                        cql::format_double(rep.q_net(s, a)) + "\n";
            }
        }
        cql::write_text_file(fs::path(o.out) / "oracle_q.csv", text);
    }
    say("transitions " + std::to_string(rep.transitions));
    say("max |Q_vi - Q_enum| " + cql::format_double(rep.enumeration_gap));
    say("max |Q_net - Q*| " + cql::format_double(rep.max_abs_error) + " (tolerance " +
        cql::format_double(fixture.max_abs_tolerance) + ")");
    if (!rep.passed) {
        std::cerr << "error: oracle: learned Q-table outside tolerance\n";
        return 1;
    }
    return 0;
}

int plot(const Options& o) {
    const std::string in = o.in.empty() ? o.out : o.in;
    const auto files = cql::render_directory(in, o.out);
    if (files.empty()) throw cql::IoError("no hist_*.csv or curve_*.csv files in " + in);
    say("rendered " + std::to_string(files.size()) + " SVG files to " + o.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conservative Q-learning for sepsis treatment on offline data"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Simulate a cohort and write train/val/test CSVs");
    gen->add_option("--seed", o.seed, "Cohort and split seed");
    gen->add_option("--patients", o.patients, "Number of patients")->check(CLI::PositiveNumber);
    gen->add_option("--config", o.sim_config, "Simulator key = value config");
    gen->add_option("--out", o.out, "Output directory")->required();

    auto* bins = app.add_subcommand("fit-bins", "Fit dose quartile bins on a dataset");
    bins->add_option("--data", o.data, "Dataset CSV")->required();
    bins->add_option("--out", o.out, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train a CQL policy");
    tr->add_option("--config", o.config, "Training key = value config");
    tr->add_option("--data", o.data, "Training CSV")->required();
    tr->add_option("--val", o.val, "Validation CSV (default: hold out patients from --data)");
    tr->add_option("--out", o.out, "Run directory")->required();

    auto* ev = app.add_subcommand("eval", "Action histograms and mortality curves on a test set");
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    ev->add_option("--data", o.data, "Test CSV")->required();
    ev->add_option("--out", o.out, "Output directory")->required();

    auto* oc = app.add_subcommand("oracle-check", "Compare a trained net to value iteration");
    oc->add_option("--fixture", o.fixture, "Fixture MDP file")->required();
    oc->add_option("--out", o.out, "Directory for the Q-table comparison CSV");

    auto* pl = app.add_subcommand("plot", "Render histogram and curve CSVs to SVG");
    pl->add_option("--in", o.in, "Directory with CSVs (default: --out)");
    pl->add_option("--out", o.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*gen) return gen_data(o);
        if (*bins) return fit_bins(o);
        if (*tr) return train(o);
        if (*ev) return eval(o);
        if (*oc) return oracle_check(o);
        if (*pl) return plot(o);
    } catch (const cql::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
