#include "rsu/backend.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "rsu/error.hpp"
#include "rsu/network.hpp"
#include "rsu/text.hpp"

namespace rsu {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string render_item(const AnnotationItem& item, const Taxonomy& taxonomy) {
  const auto idx = taxonomy.find(item.label);
  const std::string surface = idx ? taxonomy.entry(*idx).surface(item.count.value_or(1)) : item.label;
  return item.count ? std::to_string(*item.count) + " " + surface : surface;
}

std::string render_side(const std::vector<AnnotationItem>& items, const Taxonomy& taxonomy) {
  std::vector<std::string> parts;
  for (const auto& i : items) parts.push_back(render_item(i, taxonomy));
  return join(parts, " and ");
}

}  // namespace

std::string render_items(std::span<const AnnotationItem> items, const Taxonomy& taxonomy) {
  std::vector<std::string> parts;
  for (const auto& i : items) parts.push_back(render_item(i, taxonomy));
  return join(parts, ", ");
}

MockOutput mock_render(const Annotation& annotation, const Taxonomy& taxonomy, double corruption_rate,
                       std::uint64_t seed) {
  if (!(corruption_rate >= 0.0 && corruption_rate <= 1.0)) {
    throw Error(ErrorCode::validation, "corruption rate must be in [0,1]");
  }
  std::mt19937_64 rng(seed);
  MockOutput out;
  std::vector<AnnotationItem> kept;
  for (const auto& item : annotation.items) {
    ++out.items;
    if (uniform01(rng) >= corruption_rate) {
      kept.push_back(item);
      continue;
    }
    ++out.corrupted_items;
    std::vector<std::size_t> others;
    for (auto idx : taxonomy.indices_in(item.category)) {
      if (taxonomy.entry(idx).label != item.label) others.push_back(idx);
    }
    const bool drop = others.empty() || uniform01(rng) < 0.5;
    if (drop) continue;
    AnnotationItem replaced = item;
    replaced.label = taxonomy.entry(others[rng() % others.size()]).label;
    kept.push_back(std::move(replaced));
  }
  out.narration = render_items(kept, taxonomy);

  std::vector<std::string> sentences;
  for (const auto& st : annotation.reasoning) {
    ++out.statements;
    const bool reversed = uniform01(rng) < corruption_rate;
    if (reversed) ++out.corrupted_statements;
    const auto& effects = reversed ? st.causes : st.effects;
    const auto& causes = reversed ? st.effects : st.causes;
    sentences.push_back(render_side(effects, taxonomy) + " because " + render_side(causes, taxonomy) + ".");
  }
  out.reasoning = join(sentences, " ");
  return out;
}

bool is_structured_prompt(const std::string& prompt_text) {
  return prompt_text.find(kEnvironmentHeader) != std::string::npos &&
         prompt_text.find(kAgentHeader) != std::string::npos &&
         prompt_text.find(kMotionHeader) != std::string::npos;
}

MockBackend::MockBackend(std::shared_ptr<const Taxonomy> taxonomy, MockConfig config)
    : taxonomy_(std::move(taxonomy)), config_(config) {
  if (!taxonomy_) throw Error(ErrorCode::validation, "mock backend needs a taxonomy");
  if (!(config_.corruption_rate >= 0.0 && config_.corruption_rate <= 1.0)) {
    throw Error(ErrorCode::validation, "corruption_rate must be in [0,1]");
  }
  if (config_.unstructured_bias < 0.0) throw Error(ErrorCode::validation, "unstructured_bias must be >= 0");
  if (config_.synthetic_latency_ms < 0) throw Error(ErrorCode::validation, "synthetic latency must be >= 0");
}

BackendResponse MockBackend::infer(const BackendRequest& request) {
  const auto start = Clock::now();
  if (!request.ground_truth || request.ground_truth->empty()) {
    throw Error(ErrorCode::missing_ground_truth, "mock backend needs an annotated segment", request.request_id);
  }
  double p = config_.corruption_rate;
  if (!is_structured_prompt(request.prompt_text)) p = std::min(1.0, p + config_.unstructured_bias);
  auto rendered = mock_render(*request.ground_truth, *taxonomy_, p, config_.seed ^ fnv1a64(request.request_id));
  if (config_.synthetic_latency_ms > 0) {
    std::this_thread::sleep_until(start + std::chrono::milliseconds(config_.synthetic_latency_ms));
  }
  return {request.request_id, std::move(rendered.narration), std::move(rendered.reasoning), elapsed_ms(start)};
}

BackendResponse NullBackend::infer(const BackendRequest& request) {
  return {request.request_id, {}, {}, 0.0};
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.deadline_ms <= 0) throw Error(ErrorCode::validation, "deadline must be positive");
}

json RemoteBackend::encode_request(const BackendRequest& request, bool inline_frames) {
  json frames = json::array();
  for (const auto& ref : request.frame_refs) {
    if (!inline_frames) {
      frames.push_back({{"ref", ref}});
      continue;
    }
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw Error(ErrorCode::backend_unavailable, "cannot read frame '" + ref + "' for inline upload");
    std::ostringstream buf;
    buf << in.rdbuf();
    frames.push_back({{"b64", httplib::detail::base64_encode(buf.str())}});
  }
  return {{"request_id", request.request_id}, {"prompt_text", request.prompt_text}, {"frames", std::move(frames)}};
}

BackendResponse RemoteBackend::decode_response(const std::string& body, const std::string& request_id) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::malformed_response, "response is not valid JSON", request_id);
  }
  BackendResponse r;
  try {
    r.request_id = doc.at("request_id").get<std::string>();
    r.narration_text = doc.at("narration_text").get<std::string>();
    r.reasoning_text = doc.at("reasoning_text").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::malformed_response, "response lacks request_id/narration_text/reasoning_text", request_id);
  }
  if (r.request_id != request_id) {
    throw Error(ErrorCode::malformed_response, "response echoes request_id '" + r.request_id + "'", request_id);
  }
  return r;
}

BackendResponse RemoteBackend::infer(const BackendRequest& request) {
  if (request.prompt_text.empty()) throw Error(ErrorCode::precondition, "empty prompt", request.request_id);
  const auto body = encode_request(request, config_.inline_frames).dump();

  httplib::Client client(config_.url);
  const auto sec = config_.deadline_ms / 1000;
  const auto usec = (config_.deadline_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  const auto start = Clock::now();
  auto res = client.Post("/infer", body, "application/json");
  const double latency = elapsed_ms(start);
  if (!res) {
    const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                           (res.error() == httplib::Error::Read && latency >= 0.9 * config_.deadline_ms);
    if (timed_out) {
      throw Error(ErrorCode::backend_timeout, "no response within " + std::to_string(config_.deadline_ms) + " ms",
                  request.request_id);
    }
    throw Error(ErrorCode::backend_unavailable, "request failed: " + httplib::to_string(res.error()),
                request.request_id);
  }
  if (res->status != 200) {
    throw Error(ErrorCode::backend_unavailable, "server answered status " + std::to_string(res->status),
                request.request_id);
  }
  auto out = decode_response(res->body, request.request_id);
  out.latency_ms = latency;
  return out;
}

namespace {

Segment frame_slice(const Segment& segment, int begin, int end) {
  Segment part;
  part.id = segment.id;
  part.source_clip = segment.source_clip;
  part.annotation = segment.annotation;
  part.frame_offset = segment.frame_offset + begin;
  part.frames.assign(segment.frames.begin() + begin, segment.frames.begin() + end);
  for (int i = 0; i < end - begin; ++i) part.frames[i].index = i;
  return part;
}

void check_batches(const Segment& segment, std::span<const int> batch_sizes, int frames_per_call) {
  if (frames_per_call <= 0) throw Error(ErrorCode::precondition, "frames_per_call must be positive");
  for (int b : batch_sizes) {
    if (b <= 0 || b > static_cast<int>(segment.frames.size())) {
      throw Error(ErrorCode::precondition,
                  "batch size " + std::to_string(b) + " outside 1.." + std::to_string(segment.frames.size()),
                  segment.id);
    }
  }
}

}  // namespace

TimingTable measure_response(Backend& backend, const Segment& segment, const Taxonomy& taxonomy,
                             std::span<const int> batch_sizes, const TimingConfig& config, SimulatedLink* link) {
  check_batches(segment, batch_sizes, config.frames_per_call);
  TimingTable table;
  for (int b : batch_sizes) {
    TimingRow row;
    row.batch = b;
    const int calls = (b + config.frames_per_call - 1) / config.frames_per_call;
    const auto start = Clock::now();
    for (int c = 0; c < calls; ++c) {
      const int lo = c * config.frames_per_call;
      const int hi = std::min(b, lo + config.frames_per_call);
      const auto slice = frame_slice(segment, lo, hi);
      const auto bundle = config.prompt_strategy ? build_prompt(slice, taxonomy, config.prompt) : build_raw_prompt(slice);
      BackendRequest request;
      request.request_id = segment.id + "/b" + std::to_string(b) + "/c" + std::to_string(c);
      request.prompt_text = render_prompt(bundle, config.template_id);
      request.frame_refs = bundle.frame_refs;
      if (!segment.annotation.empty()) request.ground_truth = segment.annotation;
      try {
        const auto response = backend.infer(request);
        row.compute_ms += response.latency_ms;
      } catch (const Error& e) {
        if (!e.is_backend_failure()) throw;
        row.failed = true;
        row.error = std::string(to_string(e.code())) + ": " + e.what();
        break;
      }
      ++row.calls;
      if (link) row.transport_ms += link->sample().latency_ms;
    }
    row.total_ms = elapsed_ms(start);
    row.per_frame_ms = row.total_ms / b;
    row.overhead_ms = std::max(0.0, row.total_ms - row.compute_ms);
    table.rows.push_back(std::move(row));
  }
  return table;
}

TimingTable model_response(const Segment& segment, std::span<const int> batch_sizes, int frames_per_call,
                           double per_call_ms, SimulatedLink* link) {
  check_batches(segment, batch_sizes, frames_per_call);
  TimingTable table;
  for (int b : batch_sizes) {
    TimingRow row;
    row.batch = b;
    row.calls = (b + frames_per_call - 1) / frames_per_call;
    row.compute_ms = row.calls * per_call_ms;
    row.total_ms = row.compute_ms;
    row.per_frame_ms = row.total_ms / b;
    for (int c = 0; link && c < row.calls; ++c) row.transport_ms += link->sample().latency_ms;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string TimingTable::render() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%6s %6s %12s %12s %12s %12s %12s  %s\n", "frames", "calls", "total_ms",
                "per_frame_ms", "compute_ms", "overhead_ms", "transport_ms", "status");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%6d %6d %12.1f %12.1f %12.1f %12.1f %12.1f  %s\n", r.batch, r.calls, r.total_ms,
                  r.per_frame_ms, r.compute_ms, r.overhead_ms, r.transport_ms, r.failed ? "failed" : "ok");
    out << buf;
  }
  return out.str();
}

json TimingTable::to_json() const {
  json out{{"rows", json::array()}};
  for (const auto& r : rows) {
    json row{{"frames", r.batch},          {"calls", r.calls},           {"total_ms", r.total_ms},
             {"per_frame_ms", r.per_frame_ms}, {"compute_ms", r.compute_ms}, {"overhead_ms", r.overhead_ms},
             {"transport_ms", r.transport_ms}, {"status", r.failed ? "failed" : "ok"}};
    if (r.failed) row["error"] = r.error;
    out["rows"].push_back(std::move(row));
  }
  return out;
}

}  // namespace rsu
