// Command-line driver: run experiments, benchmark backends, serve live RSUs,
// split manifests and dump the enrichment corpus.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "rsu/backend.hpp"
#include "rsu/error.hpp"
#include "rsu/experiment.hpp"
#include "rsu/prompt.hpp"
#include "rsu/segments.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::vector<int> parse_batches(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw rsu::Error(rsu::ErrorCode::parse, "bad batch size '" + item + "'");
    }
  }
  if (out.empty()) throw rsu::Error(rsu::ErrorCode::parse, "no batch sizes given");
  return out;
}

// 30 frames at 30 fps with a small annotation; used when bench has no config.
rsu::Segment synthetic_segment(int frames) {
  rsu::Segment s;
  s.id = "bench";
  s.source_clip = "synthetic";
  for (int i = 0; i < frames; ++i) {
    rsu::FrameRecord f{i, i * 33, "frames/bench/" + std::to_string(i) + ".jpg", {}};
    if (i % 15 == 0) f.observations.push_back({rsu::Category::environment, "rainy weather on an urban street"});
    f.observations.push_back({rsu::Category::agent, "2 pedestrians near the intersection"});
    f.observations.push_back({rsu::Category::motion, "vehicle slowing down"});
    s.frames.push_back(std::move(f));
  }
  s.annotation.items = {{rsu::Category::environment, "rainy weather", std::nullopt},
                        {rsu::Category::agent, "pedestrian", 2},
                        {rsu::Category::motion, "slowing down", std::nullopt}};
  s.annotation.reasoning = {{{{rsu::Category::agent, "pedestrian", std::nullopt}},
                             {{rsu::Category::motion, "slowing down", std::nullopt}},
                             {}}};
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Roadside-unit driving narration framework"};
  app.require_subcommand(1);

  std::string config_path;
  std::string strategy;
  int nodes = 0;
  std::string backend;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run an end-to-end experiment over simulated RSUs");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--strategy", strategy, "Prompt strategy: on, off or both")
      ->check(CLI::IsMember({"on", "off", "both"}));
  run->add_option("--nodes", nodes, "Number of RSUs")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "Seed for mock backend and link model");
  run->add_option("--backend", backend, "Backend: mock or remote")->check(CLI::IsMember({"mock", "remote"}));
  run->add_option("--out", out_dir, "Output directory");

  std::string batches = "1,15,30";
  std::string bench_config;
  std::string bench_backend = "mock";
  std::string bench_segment;
  std::string bench_taxonomy = RSU_DEFAULT_TAXONOMY;
  int latency_ms = 300;
  int frames_per_call = 1;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "Measure response time for batch sizes");
  bench->add_option("--batch", batches, "Comma-separated batch sizes");
  bench->add_option("--config", bench_config, "Experiment config supplying manifest, taxonomy and backend")
      ->check(CLI::ExistingFile);
  bench->add_option("--backend", bench_backend, "Backend: mock, null or remote")
      ->check(CLI::IsMember({"mock", "null", "remote"}));
  bench->add_option("--segment", bench_segment, "Segment id to time (default: first long enough)");
  bench->add_option("--taxonomy", bench_taxonomy, "Taxonomy file when no config is given")->capture_default_str();
  auto* latency_opt = bench->add_option("--latency-ms", latency_ms, "Mock synthetic latency per call")
                          ->check(CLI::NonNegativeNumber);
  bench->add_option("--frames-per-call", frames_per_call, "Frames submitted per backend call")
      ->check(CLI::PositiveNumber);
  bench->add_option("--json", bench_out, "Also write the table as JSON to this path");

  std::string serve_config;
  int duration_ms = 0;
  auto* serve = app.add_subcommand("serve", "Serve live RSUs with HTTP query endpoints");
  serve->add_option("--config", serve_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--duration-ms", duration_ms, "Stop after this long (default: until interrupted)");

  std::string manifest;
  int parts = 3;
  std::string split_out;
  auto* split = app.add_subcommand("split", "Split manifest segments into sequential parts");
  split->add_option("--manifest", manifest, "Manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  split->add_option("--parts", parts, "Parts per segment")->required()->check(CLI::PositiveNumber);
  split->add_option("--out", split_out, "Write parts here instead of stdout");

  std::string corpus_taxonomy;
  auto* corpus = app.add_subcommand("corpus", "Print the pairwise enrichment corpus");
  corpus->add_option("--taxonomy", corpus_taxonomy, "Taxonomy file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = rsu::ExperimentConfig::load_file(config_path);
      if (!strategy.empty()) config.prompt_strategy = rsu::parse_strategy_mode(strategy);
      if (nodes > 0) config.nodes = nodes;
      if (!backend.empty()) config.backend.kind = backend;
      if (*seed_opt) config.apply_seed(seed);
      if (!out_dir.empty()) config.output_dir = out_dir;
      config.validate();
      const auto result = rsu::run_experiment(config);
      std::cout << result.accuracy.render_table() << "\n" << result.timing.render();
      std::cout << "\nalerts: " << result.alerts.size() << "\n";
      for (const auto& f : result.files) std::cout << "wrote " << f.string() << "\n";
      return 0;
    }

    if (*bench) {
      const auto sizes = parse_batches(batches);
      std::shared_ptr<const rsu::Taxonomy> taxonomy;
      rsu::Segment segment;
      rsu::BackendSelection selection;
      selection.kind = bench_backend;
      rsu::TimingConfig timing;
      timing.frames_per_call = frames_per_call;
      int needed = 1;
      for (int b : sizes) needed = std::max(needed, b);
      if (!bench_config.empty()) {
        const auto config = rsu::ExperimentConfig::load_file(bench_config);
        taxonomy = std::make_shared<const rsu::Taxonomy>(rsu::Taxonomy::load_file(config.taxonomy));
        const auto segments = rsu::load_manifest_file(config.manifest, taxonomy.get());
        const rsu::Segment* chosen = nullptr;
        for (const auto& s : segments) {
          if (bench_segment.empty() ? static_cast<int>(s.frames.size()) >= needed : s.id == bench_segment) {
            chosen = &s;
            break;
          }
        }
        if (!chosen) throw rsu::Error(rsu::ErrorCode::not_found, "no suitable segment in manifest");
        segment = *chosen;
        if (bench_backend == config.backend.kind) selection = config.backend;
        timing.prompt.keyframes = config.keyframe_policy;
        timing.prompt.window_half_width = config.window_half_width;
      } else {
        taxonomy = std::make_shared<const rsu::Taxonomy>(rsu::Taxonomy::load_file(bench_taxonomy));
        segment = synthetic_segment(std::max(30, needed));
      }
      if (*latency_opt || bench_config.empty()) selection.mock.synthetic_latency_ms = latency_ms;
      auto be = rsu::make_backend(selection, taxonomy);
      const auto table = rsu::measure_response(*be, segment, *taxonomy, sizes, timing);
      std::cout << table.render();
      if (!bench_out.empty()) {
        std::ofstream out(bench_out);
        out << table.to_json().dump(2) << "\n";
      }
      return 0;
    }

    if (*serve) {
      auto config = rsu::ExperimentConfig::load_file(serve_config);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      rsu::LiveDeployment deployment(config);
      for (const auto& n : deployment.nodes()) {
        std::cout << n.rsu_id << " transport " << n.address << " http http://" << config.serve.host << ":"
                  << n.http_port << "\n";
      }
      std::cout.flush();
      if (config.serve.replay_manifest) deployment.replay_manifest();
      const auto start = std::chrono::steady_clock::now();
      while (!g_interrupted) {
        if (duration_ms > 0 && std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(duration_ms)) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      deployment.stop();
      return 0;
    }

    if (*split) {
      const auto segments = rsu::load_manifest_file(manifest);
      std::ofstream file;
      if (!split_out.empty()) {
        file.open(split_out);
        if (!file) throw rsu::Error(rsu::ErrorCode::not_found, "cannot write", split_out);
      }
      std::ostream& out = split_out.empty() ? std::cout : file;
      for (const auto& s : segments) {
        for (const auto& part : rsu::split_segment(s, parts)) out << rsu::to_json(part).dump() << "\n";
      }
      return 0;
    }

    if (*corpus) {
      const auto taxonomy = rsu::Taxonomy::load_file(corpus_taxonomy);
      for (const auto& pair : rsu::generate_enrichment_corpus(taxonomy)) {
        std::cout << rsu::to_string(pair.first.category) << "\t" << pair.first.label << "\t"
                  << rsu::to_string(pair.second.category) << "\t" << pair.second.label << "\t" << pair.describe()
                  << "\n";
      }
      return 0;
    }
  } catch (const rsu::Error& e) {
    std::cerr << "error [" << rsu::to_string(e.code()) << "] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
