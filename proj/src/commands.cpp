#include "evopoison/commands.hpp"

#include <algorithm>
#include <functional>
#include <iostream>
#include <set>

#include "evopoison/attack.hpp"
#include "evopoison/errors.hpp"
#include "evopoison/evaluation.hpp"
#include "evopoison/multi.hpp"
#include "evopoison/util.hpp"
#include "evopoison/workspace.hpp"

namespace evopoison::cli {

using nlohmann::json;

namespace {

struct TargetRecord {
    attack::AttackTarget target;
    std::string correct_answer; // optional gold answer for CASR
};

std::vector<std::pair<std::string, std::string>> load_corpus_docs(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> docs;
    for (const auto& record : Workspace::read_jsonl(path))
        docs.emplace_back(record.at("id").get<std::string>(),
                          record.at("text").get<std::string>());
    return docs;
}

std::vector<TargetRecord> load_targets(const std::string& path) {
    std::vector<TargetRecord> targets;
    for (const auto& record : Workspace::read_jsonl(path)) {
        TargetRecord t;
        t.target.id = record.at("id").get<std::string>();
        t.target.query = record.at("query").get<std::string>();
        t.target.target_answer = record.at("target_answer").get<std::string>();
        t.correct_answer = record.value("correct_answer", "");
        targets.push_back(std::move(t));
    }
    return targets;
}

graph::KnowledgeGraph load_graph(const std::filesystem::path& path) {
    return graph::graph_from_json(json::parse(Workspace::read_file(path)));
}

std::string record_id_for(const std::string& target_id, std::size_t copy,
                          std::size_t copies) {
    return copies > 1 ? target_id + "#" + std::to_string(copy) : target_id;
}

std::string target_of_record(const std::string& record_id) {
    auto pos = record_id.find('#');
    return pos == std::string::npos ? record_id : record_id.substr(0, pos);
}

// Poisoned retrieval item ids (nodes, edges, communities) per target, traced
// from the manifest's document ids through chunk provenance.
std::map<std::string, std::set<std::string>>
poison_items_per_target(const graph::KnowledgeGraph& g, const json& manifest) {
    std::map<std::string, std::vector<std::string>> prefixes; // target -> chunk prefixes
    for (const auto& doc : manifest.value("docs", json::array())) {
        std::string prefix = doc.at("doc_id").get<std::string>() + "#";
        if (doc.contains("record_id")) {
            prefixes[target_of_record(doc["record_id"].get<std::string>())].push_back(prefix);
        }
        for (const auto& member : doc.value("group_members", json::array()))
            prefixes[target_of_record(member.get<std::string>())].push_back(prefix);
    }

    std::map<std::string, std::set<std::string>> items;
    for (const auto& [target_id, target_prefixes] : prefixes) {
        auto& set = items[target_id];
        std::set<std::string> poisoned_nodes;
        for (const auto& edge : g.edges()) {
            bool poisoned = false;
            for (const auto& source : edge.provenance) {
                for (const auto& prefix : target_prefixes) {
                    if (source.rfind(prefix, 0) == 0) {
                        poisoned = true;
                        break;
                    }
                }
                if (poisoned) break;
            }
            if (!poisoned) continue;
            set.insert(rag::edge_item_id(edge));
            poisoned_nodes.insert(edge.src);
            poisoned_nodes.insert(edge.dst);
        }
        for (const auto& node : poisoned_nodes) set.insert(node);
        for (const auto& community : g.communities()) {
            for (const auto& node : poisoned_nodes) {
                if (community.members.count(node)) {
                    set.insert(community.id);
                    break;
                }
            }
        }
    }
    return items;
}

// Accumulates poisoned-token retention across the answer path.
struct RetentionAccounting {
    std::size_t poisoned_total = 0;
    std::size_t poisoned_retained = 0;
};

rag::AnswerHooks make_defense_hooks(const std::string& defense, llm::LlmGateway& gateway,
                                    const std::set<std::string>* poison_items,
                                    RetentionAccounting* accounting,
                                    std::vector<std::string>* warnings) {
    rag::AnswerHooks hooks;
    if (defense == "none") return hooks;

    if (defense == "paraphrase") {
        hooks.rewrite_query = [&gateway, warnings](const std::string& query) {
            return eval::defend_paraphrase(query, gateway, warnings);
        };
    }
    if (defense == "instruction") {
        hooks.augment_system_prompt = [](const std::string& prompt) {
            return eval::defend_instruction(prompt);
        };
    }

    // every active defense accounts retention; only "detect" filters
    bool filtering = defense == "detect";
    hooks.filter_context = [poison_items, accounting,
                            filtering](std::vector<rag::RankedItem> items) {
        std::vector<std::string> texts;
        std::vector<bool> flags;
        for (const auto& item : items) {
            texts.push_back(item.text);
            flags.push_back(poison_items && poison_items->count(item.id) > 0);
        }
        auto result = eval::defend_prompt_detection(texts, flags);
        if (accounting) {
            accounting->poisoned_total += result.poisoned_tokens_total;
            accounting->poisoned_retained += filtering ? result.poisoned_tokens_retained
                                                       : result.poisoned_tokens_total;
        }
        if (!filtering) return items;
        std::vector<rag::RankedItem> retained;
        for (std::size_t idx : result.retained_indices) retained.push_back(items[idx]);
        return retained;
    };
    return hooks;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ProviderUnavailableError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return kExitProvider;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

} // namespace

int cmd_build(const ExperimentConfig& config) {
    return run_guarded([&] {
        config.validate();
        Workspace workspace(config.paths.workspace);
        workspace.ensure_layout();

        auto docs = load_corpus_docs(config.paths.corpus);
        auto gateway = config.make_gateway();
        if (config.log_transcripts)
            gateway.set_transcript_path(workspace.llm_transcript_path());
        rag::Pipeline pipeline(gateway, config.pipeline_options());

        auto chunks = rag::chunk_corpus(docs, config.chunk_size, config.chunk_overlap);
        auto graph = pipeline.build_kg(chunks, config.seed);
        Workspace::atomic_write(workspace.clean_graph_path(), graph::serialize(graph));

        for (const auto& warning : pipeline.warnings())
            std::cerr << "warning: " << warning << "\n";
        std::cout << "built clean snapshot: nodes=" << graph.node_count()
                  << " edges=" << graph.edge_count()
                  << " communities=" << graph.communities().size() << "\n";
        return kExitOk;
    });
}

int cmd_attack(const ExperimentConfig& config, const std::string& mode) {
    return run_guarded([&] {
        config.validate();
        if (mode != "single" && mode != "multi")
            throw InvalidConfigError("attack mode must be single or multi");

        Workspace workspace(config.paths.workspace);
        workspace.ensure_layout();
        auto targets = load_targets(config.paths.targets);
        if (targets.empty()) throw InvalidConfigError("no attack targets in " +
                                                      config.paths.targets);
        auto clean_graph = load_graph(workspace.clean_graph_path());

        auto gateway = config.make_gateway();
        if (config.log_transcripts)
            gateway.set_transcript_path(workspace.llm_transcript_path());
        rag::Pipeline pipeline(gateway, config.pipeline_options());

        attack::AttackOptions attack_options;
        attack_options.execution_date = config.execution_date;
        attack_options.word_budget = config.attack_word_budget;
        attack_options.generate_background = config.attack_background;

        rag::SearchMode probe_mode = config.search_modes().front();

        std::vector<json> records;
        std::vector<json> cppl_records;
        std::vector<double> ratios;
        std::vector<multi::MultiInput> multi_inputs;
        std::size_t ok = 0, rejected = 0;

        for (const auto& entry : targets) {
            for (std::size_t copy = 0; copy < config.corpora_per_target; ++copy) {
                std::string record_id =
                    record_id_for(entry.target.id, copy, config.corpora_per_target);
                attack::AttackTarget target = entry.target;
                attack_options.variation = copy;
                attack::SingleTargetAttack atk(pipeline, attack_options);

                json record{{"record_id", record_id}};
                try {
                    auto corpus = atk.run(clean_graph, target, probe_mode);
                    std::string baseline =
                        atk.direct_injection_baseline(target.query, target.target_answer);
                    record["status"] = "ok";
                    record["target"] = attack::to_json(target);
                    record["corpus"] = attack::to_json(corpus);
                    record["baseline_text"] = baseline;
                    ++ok;

                    try {
                        auto cppl = attack::cppl_comparison(target, corpus, baseline, gateway);
                        cppl_records.push_back(
                            json{{"record_id", record_id}, {"report", attack::to_json(cppl)}});
                        ratios.push_back(cppl.ratio);
                    } catch (const CpplUnavailableError& e) {
                        std::cerr << "cppl unavailable for " << record_id << ": " << e.what()
                                  << "\n";
                    }

                    multi_inputs.push_back(
                        multi::MultiInput{"poison::" + record_id, attack::corpus_from_json(
                                                                      record["corpus"]),
                                          target.target_answer});
                } catch (const Error& e) {
                    record["status"] = "rejected";
                    record["error"] = e.what();
                    record["target"] = attack::to_json(target);
                    ++rejected;
                    std::cerr << "attack rejected for " << record_id << ": " << e.what()
                              << "\n";
                }
                records.push_back(std::move(record));
            }
        }
        if (ok == 0) throw InvalidConfigError("every attack target was rejected");

        Workspace::write_jsonl(workspace.attack_store_path(), records);

        if (!cppl_records.empty()) {
            std::sort(ratios.begin(), ratios.end());
            double median = ratios[ratios.size() / 2];
            if (ratios.size() % 2 == 0)
                median = (ratios[ratios.size() / 2 - 1] + ratios[ratios.size() / 2]) / 2.0;
            Workspace::atomic_write(
                workspace.cppl_report_path(),
                json{{"records", cppl_records}, {"median_ratio", median}}.dump(2) + "\n");
        }

        std::size_t links = 0;
        if (mode == "multi") {
            std::vector<std::string> warnings;
            auto combined = multi::assemble_multi(multi_inputs, config.pair_budget,
                                                  config.extraction(), gateway, &warnings);
            std::vector<json> docs;
            for (const auto& doc : combined.combined) docs.push_back(multi::to_json(doc));
            Workspace::write_jsonl(workspace.multi_store_path(), docs);
            links = combined.linking_facts.size();
            for (const auto& warning : warnings) std::cerr << "warning: " << warning << "\n";
        }

        std::cout << "attack " << mode << ": ok=" << ok << " rejected=" << rejected;
        if (mode == "multi") std::cout << " links=" << links;
        std::cout << "\n";
        return kExitOk;
    });
}

int cmd_inject(const ExperimentConfig& config, const std::string& arm) {
    return run_guarded([&] {
        config.validate();
        if (arm != "evolution" && arm != "baseline")
            throw InvalidConfigError("inject arm must be evolution or baseline");

        Workspace workspace(config.paths.workspace);
        workspace.ensure_layout();
        auto records = Workspace::read_jsonl(workspace.attack_store_path());

        auto docs = load_corpus_docs(config.paths.corpus);
        json manifest{{"arm", arm}, {"docs", json::array()}};

        for (const auto& record : records) {
            if (record.value("status", "") != "ok") continue;
            std::string record_id = record.at("record_id").get<std::string>();
            if (arm == "evolution") {
                std::string doc_id = "poison::" + record_id;
                docs.emplace_back(doc_id,
                                  record.at("corpus").at("assembled_text").get<std::string>());
                manifest["docs"].push_back(json{{"doc_id", doc_id}, {"record_id", record_id}});
            } else {
                std::string baseline = record.value("baseline_text", "");
                if (baseline.empty()) continue;
                std::string doc_id = "baseline::" + record_id;
                docs.emplace_back(doc_id, baseline);
                manifest["docs"].push_back(json{{"doc_id", doc_id}, {"record_id", record_id}});
            }
        }

        if (arm == "evolution" &&
            std::filesystem::exists(workspace.multi_store_path())) {
            for (const auto& doc : Workspace::read_jsonl(workspace.multi_store_path())) {
                auto parsed = multi::multi_document_from_json(doc);
                if (parsed.kind != "link") continue;
                docs.emplace_back(parsed.id, parsed.text);
                json entry{{"doc_id", parsed.id}, {"group_members", json::array()}};
                for (const auto& member : parsed.group_members) {
                    // store record ids without the "poison::" document prefix
                    std::string record_id = member.rfind("poison::", 0) == 0
                                                ? member.substr(8)
                                                : member;
                    entry["group_members"].push_back(record_id);
                }
                manifest["docs"].push_back(std::move(entry));
            }
        }

        auto gateway = config.make_gateway();
        rag::Pipeline pipeline(gateway, config.pipeline_options());
        auto chunks = rag::chunk_corpus(docs, config.chunk_size, config.chunk_overlap);
        auto graph = pipeline.build_kg(chunks, config.seed);

        Workspace::atomic_write(workspace.poisoned_graph_path(), graph::serialize(graph));
        Workspace::atomic_write(workspace.manifest_path(), manifest.dump(2) + "\n");

        std::cout << "built poisoned snapshot (" << arm << "): nodes=" << graph.node_count()
                  << " edges=" << graph.edge_count()
                  << " communities=" << graph.communities().size()
                  << " poisoned_docs=" << manifest["docs"].size() << "\n";
        return kExitOk;
    });
}

int cmd_query(const ExperimentConfig& config, const std::string& query,
              const std::string& snapshot) {
    return run_guarded([&] {
        config.validate();
        if (query.empty()) throw InvalidConfigError("query text is empty");
        if (snapshot != "clean" && snapshot != "poisoned")
            throw InvalidConfigError("snapshot must be clean or poisoned");

        Workspace workspace(config.paths.workspace);
        auto graph = load_graph(snapshot == "clean" ? workspace.clean_graph_path()
                                                    : workspace.poisoned_graph_path());
        auto gateway = config.make_gateway();
        rag::Pipeline pipeline(gateway, config.pipeline_options());

        std::vector<std::string> warnings;
        auto hooks = make_defense_hooks(config.defense, gateway, nullptr, nullptr, &warnings);

        json output = json::array();
        for (auto mode : config.search_modes()) {
            auto qa = pipeline.answer(graph, query, mode, hooks);
            json ranked = json::array();
            for (const auto& item : qa.retrieval.ranked_items)
                ranked.push_back(json{{"id", item.id},
                                      {"kind", rag::item_kind_name(item.kind)},
                                      {"score", item.score}});
            json entry{{"query", query},
                       {"mode", rag::search_mode_name(mode)},
                       {"snapshot", snapshot},
                       {"answer", qa.answer},
                       {"no_context", qa.no_context},
                       {"ranked_items", std::move(ranked)}};
            Workspace::append_jsonl(workspace.query_transcript_path(), entry);
            output.push_back(std::move(entry));
        }
        std::cout << output.dump(2) << "\n";
        return kExitOk;
    });
}

int cmd_eval(const ExperimentConfig& config) {
    return run_guarded([&] {
        config.validate();
        Workspace workspace(config.paths.workspace);
        workspace.ensure_layout();

        auto targets = load_targets(config.paths.targets);
        if (targets.empty()) throw InvalidConfigError("no targets to evaluate");
        auto clean_graph = load_graph(workspace.clean_graph_path());
        auto poisoned_graph = load_graph(workspace.poisoned_graph_path());
        json manifest = json::parse(Workspace::read_file(workspace.manifest_path()));

        auto gateway = config.make_gateway();
        if (config.log_transcripts)
            gateway.set_transcript_path(workspace.llm_transcript_path());
        rag::Pipeline pipeline(gateway, config.pipeline_options());

        auto poison_items = poison_items_per_target(poisoned_graph, manifest);
        std::vector<std::string> warnings;

        json modes_out = json::object();
        for (auto mode : config.search_modes()) {
            std::vector<eval::Verdict> verdicts;
            std::vector<rag::RetrievalResult> retrievals;
            std::vector<std::set<std::string>> per_query_poison;
            RetentionAccounting accounting;

            for (const auto& entry : targets) {
                const auto& target = entry.target;
                auto items_it = poison_items.find(target.id);
                const std::set<std::string>* items =
                    items_it == poison_items.end() ? nullptr : &items_it->second;

                auto hooks = make_defense_hooks(config.defense, gateway, items, &accounting,
                                                &warnings);
                auto clean_qa = pipeline.answer(clean_graph, target.query, mode, hooks);
                auto attacked_qa = pipeline.answer(poisoned_graph, target.query, mode, hooks);

                eval::Verdict verdict;
                verdict.query_id = target.id;
                verdict.judge_mode = config.judge_mode;
                verdict.clean_answer = clean_qa.answer;
                verdict.attacked_answer = attacked_qa.answer;
                verdict.clean_correct =
                    !entry.correct_answer.empty() &&
                    eval::judge_support(clean_qa.answer, entry.correct_answer, config.judge(),
                                        &gateway, &warnings);
                verdict.attacked_supports_target =
                    eval::judge_support(attacked_qa.answer, target.target_answer,
                                        config.judge(), &gateway, &warnings);
                verdicts.push_back(std::move(verdict));

                retrievals.push_back(attacked_qa.retrieval);
                per_query_poison.push_back(items ? *items : std::set<std::string>{});
            }

            eval::MetricsReport metrics;
            metrics.asr = eval::asr(verdicts);
            try {
                metrics.casr = eval::casr(verdicts);
            } catch (const UndefinedMetricError&) {
                metrics.casr.reset();
            }
            metrics.hits_at = eval::hits_at_n(retrievals, per_query_poison, config.hits_ns);
            if (config.defense != "none" && accounting.poisoned_total > 0) {
                metrics.retention_rate = static_cast<double>(accounting.poisoned_retained) /
                                         static_cast<double>(accounting.poisoned_total);
            }
            metrics.counts["queries"] = verdicts.size();
            metrics.counts["clean_correct"] =
                std::count_if(verdicts.begin(), verdicts.end(),
                              [](const auto& v) { return v.clean_correct; });
            metrics.counts["attacked_supporting"] =
                std::count_if(verdicts.begin(), verdicts.end(),
                              [](const auto& v) { return v.attacked_supports_target; });
            metrics.counts["poisoned_tokens_total"] = accounting.poisoned_total;

            json verdicts_out = json::array();
            for (const auto& v : verdicts) verdicts_out.push_back(eval::to_json(v));
            modes_out[rag::search_mode_name(mode)] =
                json{{"metrics", eval::to_json(metrics)}, {"verdicts", std::move(verdicts_out)}};

            std::cout << "[" << rag::search_mode_name(mode) << "] asr=" << metrics.asr
                      << " casr=" << (metrics.casr ? std::to_string(*metrics.casr) : "n/a")
                      << "\n";
        }

        json provider_models{
            {"generator", gateway.provider(llm::Role::Generator).model_name()},
            {"fabricator", gateway.provider(llm::Role::Fabricator).model_name()},
            {"evaluator", gateway.provider(llm::Role::Evaluator).model_name()}};

        json report{{"config", config.to_json()},
                    {"provider_models", std::move(provider_models)},
                    {"defense", config.defense},
                    {"modes", std::move(modes_out)},
                    {"warnings", warnings}};
        Workspace::atomic_write(workspace.report_path(), report.dump(2) + "\n");
        std::cout << "report written to " << workspace.report_path().string() << "\n";
        return kExitOk;
    });
}

int cmd_report(const ExperimentConfig& config, const std::string& csv_path) {
    return run_guarded([&] {
        Workspace workspace(config.paths.workspace);
        json report = json::parse(Workspace::read_file(workspace.report_path()));

        std::string csv = "mode,metric,value\n";
        for (const auto& [mode, body] : report.at("modes").items()) {
            const auto& metrics = body.at("metrics");
            std::cout << "mode " << mode << ":\n";
            std::cout << "  asr: " << metrics.at("asr").dump() << "\n";
            std::cout << "  casr: " << metrics.at("casr").dump() << "\n";
            std::cout << "  retention_rate: " << metrics.at("retention_rate").dump() << "\n";
            csv += mode + ",asr," + metrics.at("asr").dump() + "\n";
            csv += mode + ",casr," + metrics.at("casr").dump() + "\n";
            for (const auto& [n, value] : metrics.at("hits_at").items()) {
                std::cout << "  hits@" << n << ": " << value.dump() << "\n";
                csv += mode + ",hits@" + n + "," + value.dump() + "\n";
            }
            csv += mode + ",retention_rate," + metrics.at("retention_rate").dump() + "\n";
        }
        if (!csv_path.empty()) Workspace::atomic_write(csv_path, csv);
        return kExitOk;
    });
}

} // namespace evopoison::cli
