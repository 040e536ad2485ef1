// Command-line runner: fbmstab <generate|stoptimes|solve|stability|report> --config PATH ...
//
// Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure,
// 4 stability condition not satisfied or requested rate refused.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fbmstab/experiment.hpp"

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kNumerical = 3, kRefused = 4 };

struct Args {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<double> rho;
    unsigned threads = 0;
    bool summary_only = false;
};

int run(const std::string& command, const Args& a) {
    using namespace fbmstab;
    auto cfg = load_config(a.config);
    RunOptions opt;
    opt.out = resolve_output_dir(cfg, a.out);
    opt.threads = a.threads;
    opt.seed = a.seed;
    opt.rho = a.rho;
    opt.summary_only = a.summary_only;

    Json result;
    if (command == "generate") result = cmd_generate(cfg, opt);
    else if (command == "stoptimes") result = cmd_stoptimes(cfg, opt);
    else if (command == "solve") result = cmd_solve(cfg, opt);
    else if (command == "stability") result = cmd_stability(cfg, opt);
    else result = cmd_report(cfg, opt);

    std::cout << command << ": outputs in " << opt.out.string() << "\n";
    if (command == "stability")
        std::cout << "rho_hat* = " << format_double(result["rate"]["rho_star_hat"].get<double>())
                  << ", rho = " << format_double(result["rho"].get<double>())
                  << ", seed pass fraction = " << format_double(result["seed_pass_fraction"].get<double>())
                  << " (" << result["outcome"].get<std::string>() << ")\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fbmstab: pathwise exponential stability experiments driven by fractional Brownian motion"};
    app.require_subcommand(1);
    Args a;
    std::string chosen;

    auto add = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", a.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", a.out, "output directory (overrides output_dir and $FBMSTAB_OUT)");
        sub->add_option("--seed", a.seed, "run a single seed");
        sub->add_option("--threads", a.threads, "worker threads (0 = all cores)");
        sub->callback([&chosen, name] { chosen = name; });
        return sub;
    };
    add("generate", "sample fBm paths and check their covariance")
        ->add_flag("--summary-only", a.summary_only, "skip per-seed path files");
    add("stoptimes", "stopping sequences, window counts and d, dbar, D estimates");
    add("solve", "solve the mild equation from the initial-condition sample");
    add("stability", "estimate rho* and verify exponential decay on an ensemble")
        ->add_option("--rho", a.rho, "decay rate to verify (default rho_fraction * rho_hat*)");
    add("report", "aggregate summaries and tabulate K(mu)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        return run(chosen, a);
    } catch (const fbmstab::StabilityRefused& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kRefused;
    } catch (const fbmstab::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kConfig;
    } catch (const fbmstab::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kConfig;
    } catch (const fbmstab::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const fbmstab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
