// pprobe: corpus-to-report driver. Each subcommand runs one pipeline stage.
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "pprobe/error.hpp"
#include "pprobe/pipeline.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kDependencyExit = 3;
constexpr int kNumericExit = 4;

bool is_boolean_key(std::string_view key) {
  return key == "positive_values_only" || key == "restrict_to_wstar_words" || key == "deterministic" ||
         key == "mini";
}

std::string dashed(std::string_view key) {
  std::string s(key);
  for (auto& c : s) {
    if (c == '_') c = '-';
  }
  return s;
}

// The single table a stage is known by, for --output.
const std::map<std::string, std::string, std::less<>> kPrimaryTable = {
    {"linearity", "linearity.tsv"}, {"errors", "table1.tsv"},         {"pci-rank", "table2.tsv"},
    {"analogy", "analogy.tsv"},     {"report", "report/summary.tsv"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Paraphrase probe: SGNS, PMI and analogy-paraphrase statistics from a corpus"};
  app.require_subcommand(1, 1);

  std::string config_file, output;
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_option("--output", output, "also copy the stage's main table here");

  std::map<std::string, CLI::Option*> key_options;
  for (const auto& key : pprobe::PipelineConfig::keys()) {
    const std::string names = "--" + dashed(key.name) + (key.name.find('_') != std::string_view::npos
                                                              ? ",--" + std::string(key.name)
                                                              : std::string());
    auto* opt = app.add_option(names)->description(std::string(key.help) + " [" + std::string(key.default_value) + "]");
    if (is_boolean_key(key.name)) {
      opt->expected(0, 1);
    } else {
      opt->expected(1);
    }
    key_options.emplace(key.name, opt);
  }

  std::string stage;
  for (auto name : pprobe::stage_names()) {
    app.add_subcommand(std::string(name))->fallthrough()->callback([&stage, name] { stage = name; });
  }
  app.add_subcommand("all", "run every stage in order")->fallthrough()->callback([&stage] { stage = "all"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    pprobe::PipelineConfig config;
    if (!config_file.empty()) config.load_file(config_file);
    for (const auto& [key, opt] : key_options) {
      if (opt->count() == 0) continue;
      const auto& results = opt->results();
      config.set(key, results.empty() || results.back().empty() ? std::string("true") : results.back());
    }
    config.finalize();
    const auto outcomes = pprobe::run_stage(stage, config);
    if (!output.empty()) {
      auto it = kPrimaryTable.find(stage);
      if (it == kPrimaryTable.end()) throw pprobe::ConfigError("--output is not supported for stage " + stage);
      std::filesystem::copy_file(config.output_dir / it->second, output,
                                 std::filesystem::copy_options::overwrite_existing);
    }
    for (const auto& o : outcomes) std::cout << o.stage << '\t' << (o.cached ? "cached" : "ran") << '\n';
    return 0;
  } catch (const pprobe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const pprobe::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return kDependencyExit;
  } catch (const pprobe::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
