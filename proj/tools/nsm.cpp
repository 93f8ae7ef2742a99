#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsm/nsm.hpp"

namespace {

// "R0=<id>" bindings, which must cover R0..R(n-1) without gaps
std::vector<nsm::EntitySet> initial_from_flags(const nsm::KnowledgeBase& kb, const std::vector<std::string>& flags) {
  std::map<std::size_t, std::string> bound;
  for (const auto& f : flags) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw nsm::FormatError("--entity expects R<n>=<id>, got '" + f + "'");
    const auto idx = nsm::parse_var_name(f.substr(0, eq));
    if (!idx) throw nsm::FormatError("--entity: bad variable name '" + f.substr(0, eq) + "'");
    const auto id = f.substr(eq + 1);
    if (id.empty()) throw nsm::FormatError("--entity: empty id for " + f.substr(0, eq));
    if (!kb.entities().count(id)) std::cerr << "warning: entity '" << id << "' is not in the knowledge base\n";
    if (!bound.emplace(*idx, id).second) throw nsm::FormatError("--entity: " + f.substr(0, eq) + " bound twice");
  }
  std::vector<nsm::EntitySet> out;
  for (const auto& [idx, id] : bound) {
    if (idx != out.size()) throw nsm::FormatError("--entity: variables must be R0..R" + std::to_string(bound.size() - 1));
    out.push_back(nsm::EntitySet{nsm::Value::entity(id)});
  }
  return out;
}

void print_set(const nsm::EntitySet& s) {
  for (const auto& v : s) std::cout << v.str() << '\n';
}

std::string metrics_json(const nsm::Metrics& m) {
  nlohmann::ordered_json j;
  j["avg_precision"] = m.avg_precision;
  j["avg_recall"] = m.avg_recall;
  j["avg_f1"] = m.avg_f1;
  j["accuracy"] = m.accuracy;
  return j.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural symbolic machine toolkit"};
  app.require_subcommand(1);

  nsm::KbGenOptions kbopt;
  std::string out_path;
  auto* gen_kb = app.add_subcommand("gen-kb", "generate a random knowledge base");
  gen_kb->add_option("--seed", kbopt.seed);
  gen_kb->add_option("--entities", kbopt.n_entities)->check(CLI::PositiveNumber);
  gen_kb->add_option("--properties", kbopt.n_properties)->check(CLI::PositiveNumber);
  gen_kb->add_option("--edge-density", kbopt.edge_density)->check(CLI::Range(0.0, 1.0));
  gen_kb->add_option("--attribute-density", kbopt.attribute_density)->check(CLI::Range(0.0, 1.0));
  gen_kb->add_option("--out", out_path, "output file (default: stdout)");

  std::string kb_path, out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t n_train = 300, n_dev = 100, n_test = 100;
  bool with_gold = false;
  auto* gen_data = app.add_subcommand("gen-data", "generate train/dev/test question files");
  gen_data->add_option("--kb", kb_path)->required();
  gen_data->add_option("--seed", seed);
  gen_data->add_option("--train", n_train);
  gen_data->add_option("--dev", n_dev);
  gen_data->add_option("--test", n_test);
  gen_data->add_option("--out-dir", out_dir);
  gen_data->add_flag("--gold", with_gold, "also write <split>.gold.tsv with template and gold program");

  std::string program_text, prefix;
  std::vector<std::string> entity_flags;
  std::size_t max_expressions = 3;
  auto* exec = app.add_subcommand("exec", "execute a program and print its denotation");
  exec->add_option("--kb", kb_path)->required();
  exec->add_option("--program", program_text)->required();
  exec->add_option("--entity", entity_flags, "R<n>=<entity id>, repeatable");
  exec->add_option("--max-expressions", max_expressions);

  auto* assist = app.add_subcommand("assist", "print the valid next tokens after a prefix");
  assist->add_option("--kb", kb_path)->required();
  assist->add_option("--prefix", prefix);
  assist->add_option("--entity", entity_flags, "R<n>=<entity id>, repeatable");
  assist->add_option("--max-expressions", max_expressions);

  std::string checkpoint, question;
  auto* parse = app.add_subcommand("parse", "decode a question into a program");
  parse->add_option("--kb", kb_path)->required();
  parse->add_option("--checkpoint", checkpoint)->required();
  parse->add_option("--question", question)->required();
  parse->add_option("--max-expressions", max_expressions);

  std::string train_path, dev_path, config_path, test_path;
  std::optional<std::uint64_t> train_seed;
  auto* train = app.add_subcommand("train", "iterative ML followed by augmented REINFORCE");
  train->add_option("--kb", kb_path)->required();
  train->add_option("--train", train_path)->required();
  train->add_option("--dev", dev_path)->required();
  train->add_option("--config", config_path);
  train->add_option("--out-checkpoint", checkpoint)->required();
  train->add_option("--seed", train_seed, "overrides the config seed");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a question file");
  eval->add_option("--kb", kb_path)->required();
  eval->add_option("--test", test_path)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--max-expressions", max_expressions);

  nsm::GradCheckConfig gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check on a miniature model");
  gradcheck->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen_kb) {
      const auto text = nsm::serialize_kb(nsm::gen_kb(kbopt));
      if (out_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw nsm::Error("cannot write '" + out_path + "'");
        out << text;
      }
    } else if (*gen_data) {
      const auto kb = nsm::load_kb(kb_path);
      const auto ds = nsm::gen_dataset(kb, nsm::default_templates(), seed, n_train, n_dev, n_test);
      std::filesystem::create_directories(out_dir);
      const std::pair<const char*, const std::vector<nsm::GeneratedItem>*> splits[] = {
          {"train", &ds.train}, {"dev", &ds.dev}, {"test", &ds.test}};
      for (const auto& [name, items] : splits) {
        const auto base = (std::filesystem::path(out_dir) / name).string();
        nsm::save_dataset(nsm::items_of(*items), base + ".jsonl");
        if (with_gold) {
          std::ofstream gold(base + ".gold.tsv", std::ios::binary);
          for (const auto& g : *items) gold << g.item.id << '\t' << g.template_name << '\t' << g.gold_program << '\n';
        }
      }
    } else if (*exec) {
      const auto kb = nsm::load_kb(kb_path);
      const auto init = initial_from_flags(kb, entity_flags);
      const auto prog = nsm::parse_program(program_text, {init.size(), max_expressions});
      print_set(nsm::execute_program(kb, prog, init));
    } else if (*assist) {
      const auto kb = nsm::load_kb(kb_path);
      const auto init = initial_from_flags(kb, entity_flags);
      std::vector<nsm::Token> tokens;
      for (const auto& w : nsm::split_whitespace(prefix)) tokens.emplace_back(w);
      const auto state = nsm::replay(kb, init, tokens, max_expressions);
      for (const auto& t : state.valid_tokens()) std::cout << t.text() << '\n';
    } else if (*parse) {
      const auto kb = nsm::load_kb(kb_path);
      const auto model = nsm::load_model(checkpoint);
      nsm::QAItem item;
      item.id = "cli";
      item.question = nsm::split_whitespace(question);
      for (auto& w : item.question)
        for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      item.entities = nsm::resolve_entities(kb, item.question);
      nsm::Programmer programmer(model, kb, max_expressions);
      const auto best = programmer.beam_search(item, 1);
      if (best.empty()) {
        std::cout << "RETURN\n";
      } else {
        std::cout << nsm::serialize(best.front().state.program()) << '\n';
        print_set(best.front().state.result());
      }
    } else if (*train) {
      const auto kb = nsm::load_kb(kb_path);
      auto cfg = config_path.empty() ? nsm::TrainConfig{} : nsm::load_config(config_path);
      if (train_seed) cfg.seed = *train_seed;
      cfg.validate();
      std::cerr << nsm::format_config(cfg);
      const auto train_set = nsm::load_dataset(train_path);
      const auto dev_set = nsm::load_dataset(dev_path);
      auto model = nsm::make_model(train_set, kb, cfg);
      nsm::Trainer trainer(model, kb, cfg);
      nlohmann::ordered_json header;
      std::istringstream lines(nsm::format_config(cfg));
      for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        header["config"][line.substr(0, eq)] = line.substr(eq + 1);
      }
      std::cout << header.dump() << std::endl;
      auto sink = [](const nsm::TrainLogEntry& e) { std::cout << e.json() << std::endl; };
      trainer.iterative_ml(train_set, dev_set, sink);
      trainer.augmented_reinforce(train_set, dev_set, sink);
      nsm::save_model(model, checkpoint);
    } else if (*eval) {
      const auto kb = nsm::load_kb(kb_path);
      const auto model = nsm::load_model(checkpoint);
      std::cout << metrics_json(nsm::evaluate(nsm::load_dataset(test_path), model, kb, max_expressions)) << '\n';
    } else if (*gradcheck) {
      double worst = 0.0;
      for (auto objective : {nsm::Objective::Likelihood, nsm::Objective::PolicyGradient}) {
        gc.objective = objective;
        const auto r = nsm::grad_check(gc, seed);
        std::cout << (objective == nsm::Objective::Likelihood ? "likelihood" : "policy_gradient")
                  << " max_rel_error " << r.max_rel_error << " worst " << r.worst_tensor << " coordinates "
                  << r.coordinates << '\n';
        worst = std::max(worst, r.max_rel_error);
      }
      std::cout << "max relative error " << worst << '\n';
      return worst <= 1e-4 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
