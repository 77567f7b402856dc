// evopoison: a GraphRAG poisoning testbed.
//
//   evopoison build  --config cfg.json
//   evopoison attack --config cfg.json --mode single|multi
//   evopoison inject --config cfg.json [--arm evolution|baseline]
//   evopoison query  --config cfg.json --query "..." [--snapshot clean|poisoned]
//   evopoison eval   --config cfg.json [--defense none|paraphrase|instruction|detect]
//   evopoison report --config cfg.json [--csv out.csv]

#include <iostream>

#include <CLI11.hpp>

#include "evopoison/commands.hpp"

using namespace evopoison;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string defense;
    bool mock = false;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
    cmd->add_option("--defense", args.defense,
                    "defense transform: none, paraphrase, instruction, detect");
    cmd->add_flag("--mock", args.mock, "force the deterministic mock provider");
    cmd->add_option("--seed", args.seed, "override the config seed");
}

cli::ExperimentConfig load_config(const CommonArgs& args) {
    auto config = cli::ExperimentConfig::load(args.config_path);
    if (!args.defense.empty()) config.defense = args.defense;
    if (args.mock) config.mock_mode = true;
    if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GraphRAG knowledge-evolution poisoning testbed"};
    app.require_subcommand(1);

    CommonArgs build_args, attack_args, inject_args, query_args, eval_args, report_args;
    std::string attack_mode = "single";
    std::string inject_arm = "evolution";
    std::string query_text, query_snapshot = "clean";
    std::string csv_path;

    auto* build = app.add_subcommand("build", "build the clean KG snapshot");
    add_common(build, build_args);

    auto* attack = app.add_subcommand("attack", "generate poisoned corpora");
    add_common(attack, attack_args);
    attack->add_option("--mode", attack_mode, "single or multi");

    auto* inject = app.add_subcommand("inject", "inject corpora and rebuild the KG");
    add_common(inject, inject_args);
    inject->add_option("--arm", inject_arm, "evolution or baseline");

    auto* query = app.add_subcommand("query", "answer one query against a snapshot");
    add_common(query, query_args);
    query->add_option("--query", query_text, "query text")->required();
    query->add_option("--snapshot", query_snapshot, "clean or poisoned");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate the attack and write the report");
    add_common(eval_cmd, eval_args);

    auto* report = app.add_subcommand("report", "summarize the last report");
    add_common(report, report_args);
    report->add_option("--csv", csv_path, "also write a CSV summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitUsage;
    }

    try {
        if (build->parsed()) return cli::cmd_build(load_config(build_args));
        if (attack->parsed()) return cli::cmd_attack(load_config(attack_args), attack_mode);
        if (inject->parsed()) return cli::cmd_inject(load_config(inject_args), inject_arm);
        if (query->parsed())
            return cli::cmd_query(load_config(query_args), query_text, query_snapshot);
        if (eval_cmd->parsed()) return cli::cmd_eval(load_config(eval_args));
        if (report->parsed()) return cli::cmd_report(load_config(report_args), csv_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitUsage;
    }
    return cli::kExitUsage;
}
