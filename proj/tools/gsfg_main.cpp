#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "gsfg/scenario_io.hpp"

namespace {

using namespace gsfg;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string fmt_pole(const std::complex<double>& p) {
    if (std::fabs(p.imag()) < 1e-12) return fmt(p.real());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g%+.6gi", p.real(), p.imag());
    return buf;
}

struct RunOptions {
    std::string file;
    std::string csv_path;
    std::string summary_path;
    double gamma = -1.0;
    bool gamma_set = false;
    double dt = -1.0;
    bool dt_set = false;
    std::string mode;
};

int cmd_validate(const std::string& file) {
    try {
        load_scenario_file(file);
    } catch (const ParseError& e) {
        std::cerr << file << ":" << e.line << ":" << e.col << ": " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << file << ": " << e.what() << "\n";
        return 2;
    }
    std::cout << file << ": ok\n";
    return 0;
}

int cmd_run(const RunOptions& opt) {
    Scenario scenario = load_scenario_file(opt.file);
    std::vector<std::string> overrides;
    if (opt.gamma_set) {
        scenario.learning.gamma = opt.gamma;
        overrides.push_back("gamma");
    }
    if (opt.dt_set) {
        scenario.dt = opt.dt;
        overrides.push_back("dt");
    }
    if (!opt.mode.empty()) {
        if (opt.mode == "truncated")
            scenario.learning.mode = LearningMode::Truncated;
        else if (opt.mode == "full")
            scenario.learning.mode = LearningMode::FullSolve;
        else
            throw SemanticError("unknown mode '" + opt.mode + "'");
        overrides.push_back("mode");
    }

    const SimulationTrace trace = run(scenario);

    if (!opt.csv_path.empty()) write_csv_file(trace, opt.csv_path);

    const std::string summary = write_summary(scenario, trace, overrides);
    if (opt.summary_path.empty()) {
        std::cout << summary;
    } else {
        std::ofstream out(opt.summary_path);
        if (!out) throw Error("cannot write summary file: " + opt.summary_path);
        out << summary;
    }

    if (trace.fault) {
        std::cerr << "run failed: " << trace.fault->message << "\n";
        return 1;
    }
    return 0;
}

int cmd_gradcheck(const std::string& file, double h) {
    const Scenario scenario = load_scenario_file(file);

    std::map<NodeId, double> inputs;
    for (NodeId id : input_nodes(scenario.graph)) {
        auto it = scenario.fixed_inputs.find(id);
        inputs[id] = it != scenario.fixed_inputs.end() ? it->second
                                                       : signal(scenario.input, 0.0);
    }

    const GradcheckReport report = gradcheck(scenario.graph, inputs,
                                             scenario.static_targets,
                                             scenario.learning.gamma, h);

    std::printf("%-10s %18s %18s %12s\n", "branch", "engine_rate", "fd_rate",
                "rel_error");
    for (const auto& entry : report.entries)
        std::printf("%3d->%-5d %18.10e %18.10e %12.3e\n", entry.branch.first,
                    entry.branch.second, entry.engine_rate, entry.fd_rate,
                    entry.rel_error);
    std::printf("error_value: %.12g\n", report.error_value);
    std::printf("max_rel_error: %.3e\n", report.max_rel_error);
    return 0;
}

int cmd_poles(const std::string& file) {
    const Scenario scenario = load_scenario_file(file);

    auto print_poles = [](const std::string& name, const LinearTF& tf) {
        const auto poles = poles_of(tf.den);
        std::cout << name << ":";
        for (std::size_t i = 0; i < poles.size(); ++i)
            std::cout << (i ? ", " : " ") << fmt_pole(poles[i]);
        if (poles.empty()) std::cout << " (static gain)";
        std::cout << "\n";
    };

    if (scenario.reference) print_poles("reference", scenario.reference->tf);
    std::vector<const NodeSpec*> nodes;
    for (const auto& n : scenario.graph.nodes) nodes.push_back(&n);
    std::sort(nodes.begin(), nodes.end(),
              [](const NodeSpec* a, const NodeSpec* b) { return a->id < b->id; });
    for (const NodeSpec* node : nodes)
        if (const auto* tf = std::get_if<LinearTF>(&node->dynamics);
            tf && !is_pure_derivative(*tf))
            print_poles("node " + std::to_string(node->id), *tf);
    return 0;
}

int cmd_sweep(const std::string& file, double from, double to, int steps) {
    if (steps < 1) throw SemanticError("sweep needs at least one step");
    const Scenario base = load_scenario_file(file);

    struct Row {
        double gamma;
        double final_rms = 0.0;
        double max_abs = 0.0;
        std::string status = "ok";
    };

    auto run_one = [&base](double gamma) {
        Scenario scenario = base;
        scenario.learning.gamma = gamma;
        Row row;
        row.gamma = gamma;
        try {
            const SimulationTrace trace = run(scenario);
            if (trace.fault) {
                row.status = trace.fault->kind == Fault::Kind::Diverged ? "diverged"
                             : trace.fault->kind == Fault::Kind::Singular
                                 ? "singular"
                                 : "weight_blowup";
                return row;
            }
            const double end = trace.t.back();
            const double window = std::min(20.0, scenario.duration / 2.0);
            const Metrics tail = metrics(trace, end - window, end);
            const Metrics whole = metrics(trace, 0.0, end);
            row.final_rms = tail.rms_error;
            row.max_abs = whole.max_abs_error;
        } catch (const Error& e) {
            row.status = std::string("error: ") + e.what();
        }
        return row;
    };

    std::vector<std::future<Row>> futures;
    for (int i = 0; i < steps; ++i) {
        const double gamma =
            steps == 1 ? from
                       : from + (to - from) * static_cast<double>(i) /
                             static_cast<double>(steps - 1);
        futures.push_back(std::async(std::launch::async, run_one, gamma));
    }

    std::vector<Row> rows;
    for (auto& f : futures) rows.push_back(f.get());
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.gamma < b.gamma; });

    std::cout << "gamma,final_window_rms,max_abs_error,status\n";
    for (const auto& row : rows)
        std::cout << fmt(row.gamma) << "," << fmt(row.final_rms) << ","
                  << fmt(row.max_abs) << "," << row.status << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generalized signal-flow graph simulation and online gain adaptation"};
    app.require_subcommand(1);

    std::string file;
    auto* validate_cmd = app.add_subcommand("validate", "check a scenario file");
    validate_cmd->add_option("file", file, "scenario file")->required();

    RunOptions run_opt;
    auto* run_cmd = app.add_subcommand("run", "simulate a scenario");
    run_cmd->add_option("file", run_opt.file, "scenario file")->required();
    run_cmd->add_option("--csv", run_opt.csv_path, "write the trace as CSV");
    run_cmd->add_option("--summary", run_opt.summary_path,
                        "write the summary here instead of stdout");
    run_cmd->add_option("--gamma", run_opt.gamma, "override the adaptation rate")
        ->check(CLI::Number);
    run_cmd->add_option("--dt", run_opt.dt, "override the step size")->check(CLI::Number);
    run_cmd->add_option("--mode", run_opt.mode, "truncated | full");

    std::string gradcheck_file;
    double gradcheck_h = 1e-5;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the weight rates");
    gradcheck_cmd->set_help_flag("--help", "print help");  // frees -h for the step size
    gradcheck_cmd->add_option("file", gradcheck_file, "scenario file (static graph)")
        ->required();
    gradcheck_cmd->add_option("--h", gradcheck_h, "perturbation size");

    std::string poles_file;
    auto* poles_cmd =
        app.add_subcommand("poles", "poles of every transfer function in the file");
    poles_cmd->add_option("file", poles_file, "scenario file")->required();

    std::string sweep_file;
    double gamma_from = 0.0, gamma_to = 0.0;
    int sweep_steps = 0;
    auto* sweep_cmd = app.add_subcommand("sweep", "tabulate final rms against gamma");
    sweep_cmd->add_option("file", sweep_file, "scenario file")->required();
    sweep_cmd->add_option("--gamma-from", gamma_from)->required();
    sweep_cmd->add_option("--gamma-to", gamma_to)->required();
    sweep_cmd->add_option("--steps", sweep_steps)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (validate_cmd->parsed()) return cmd_validate(file);
        if (run_cmd->parsed()) {
            run_opt.gamma_set = run_cmd->count("--gamma") > 0;
            run_opt.dt_set = run_cmd->count("--dt") > 0;
            return cmd_run(run_opt);
        }
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_file, gradcheck_h);
        if (poles_cmd->parsed()) return cmd_poles(poles_file);
        if (sweep_cmd->parsed())
            return cmd_sweep(sweep_file, gamma_from, gamma_to, sweep_steps);
    } catch (const ParseError& e) {
        std::cerr << e.what() << " (line " << e.line << ", column " << e.col << ")\n";
        return 2;
    } catch (const SyntaxError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const SemanticError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        // runtime scenario failures: divergence, singular systems, loops
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 2;
}
