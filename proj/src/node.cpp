#include "rsu/node.hpp"

#include <algorithm>

#include "rsu/error.hpp"
#include "rsu/evaluation.hpp"
#include "rsu/network.hpp"
#include "rsu/text.hpp"

namespace rsu {

using nlohmann::json;

json to_json(const Alert& a) {
  return {{"alert_id", a.alert_id},
          {"origin", a.origin},
          {"hazard_label", a.hazard_label},
          {"evidence", a.evidence},
          {"timestamp", a.timestamp}};
}

Alert parse_alert(const json& j) {
  try {
    Alert a{j.at("alert_id").get<std::string>(), j.at("origin").get<std::string>(),
            j.at("hazard_label").get<std::string>(), j.value("evidence", std::string{}),
            j.at("timestamp").get<std::int64_t>()};
    if (a.alert_id.empty() || a.hazard_label.empty()) throw Error(ErrorCode::validation, "empty alert field");
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad alert: ") + e.what());
  }
}

json to_json(const Observation& o) {
  return {{"observation_id", o.observation_id},
          {"reporter", o.reporter},
          {"category", to_string(o.category)},
          {"text", o.text},
          {"received_at", o.received_at}};
}

Observation parse_observation(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::parse, "observation must be an object");
  Observation o;
  try {
    o.observation_id = j.value("observation_id", std::string{});
    o.reporter = j.value("reporter", std::string{"anonymous"});
    const auto cat = j.at("category").get<std::string>();
    auto c = parse_category(cat);
    if (!c) throw Error(ErrorCode::validation, "unknown category '" + cat + "'");
    o.category = *c;
    o.text = j.at("text").get<std::string>();
    o.received_at = j.value("received_at", std::int64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad observation: ") + e.what());
  }
  return o;
}

json to_json(const OutputRecord& r) {
  json j{{"segment_id", r.segment_id}, {"request_id", r.request_id}, {"at", r.at},
         {"status", r.failed ? "failed" : "ok"}, {"prompt", r.prompt}, {"narration", r.narration},
         {"reasoning", r.reasoning}, {"latency_ms", r.latency_ms}, {"alerts", r.alert_ids}};
  if (r.failed) j["error"] = r.error;
  if (r.narration_score) j["narration_score"] = *r.narration_score;
  if (r.reasoning_score) j["reasoning_score"] = *r.reasoning_score;
  return j;
}

json query_snapshot(const NodeState& state, std::string_view kind) {
  json out{{"rsu_id", state.rsu_id}, {"kind", kind}};
  if (kind == "alerts") {
    auto alerts = state.alerts;
    std::stable_sort(alerts.begin(), alerts.end(),
                     [](const Alert& a, const Alert& b) { return a.timestamp > b.timestamp; });
    out["alerts"] = json::array();
    for (const auto& a : alerts) out["alerts"].push_back(to_json(a));
  } else if (kind == "outputs") {
    out["outputs"] = json::array();
    for (const auto& r : state.outputs) out["outputs"].push_back(to_json(r));
  } else if (kind == "latest") {
    out["outputs"] = json::array();
    if (!state.outputs.empty()) out["outputs"].push_back(to_json(state.outputs.back()));
    out["processed"] = state.outputs.size();
    out["alerts_seen"] = state.alerts_seen.size();
    out["pending_observations"] = state.pending_observations.size();
    out["dropped_messages"] = state.dropped_messages;
    out["peers"] = json::array();
    for (const auto& [id, status] : state.peers) out["peers"].push_back(id);
    out["assigned_part"] = state.assigned_part ? json(state.assigned_part->id) : json(nullptr);
  } else {
    throw Error(ErrorCode::validation, "unknown query kind '" + std::string(kind) + "'");
  }
  return out;
}

std::vector<std::string> detect_hazard(std::span<const std::string> texts, std::span<const std::string> hazard_set,
                                       const Taxonomy& taxonomy) {
  std::set<std::size_t> found;
  for (const auto& t : texts) {
    for (const auto& m : taxonomy.scan(tokenize(t))) found.insert(m.entry);
  }
  std::vector<std::string> labels;
  for (const auto& phrase : hazard_set) {
    auto idx = taxonomy.find(phrase);
    if (!idx || !found.count(*idx)) continue;
    const auto& label = taxonomy.entry(*idx).label;
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  }
  return labels;
}

RsuNode::RsuNode(std::string rsu_id, std::shared_ptr<const Taxonomy> taxonomy, NodeConfig config)
    : taxonomy_(std::move(taxonomy)), config_(std::move(config)) {
  if (rsu_id.empty()) throw Error(ErrorCode::validation, "empty rsu id");
  if (!taxonomy_) throw Error(ErrorCode::validation, "node needs a taxonomy", rsu_id);
  for (const auto& phrase : config_.hazard_set) {
    auto idx = taxonomy_->find(phrase);
    if (!idx || taxonomy_->entry(*idx).category == Category::environment) {
      throw Error(ErrorCode::validation, "hazard '" + phrase + "' is not an agent or motion keyword", rsu_id);
    }
  }
  state_.rsu_id = std::move(rsu_id);
}

namespace {

std::optional<std::string> excerpt(const std::string& text, const Taxonomy& taxonomy, const std::string& label) {
  // The clause (comma or sentence delimited) that mentions the hazard.
  std::size_t begin = 0;
  while (begin < text.size()) {
    auto end = text.find_first_of(",.;\n", begin);
    if (end == std::string::npos) end = text.size();
    const auto clause = text.substr(begin, end - begin);
    for (const auto& m : taxonomy.match_keywords(clause)) {
      if (m.entry->label == label) {
        auto first = clause.find_first_not_of(' ');
        return first == std::string::npos ? clause : clause.substr(first);
      }
    }
    begin = end + 1;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Alert> RsuNode::process_segment(const Segment& segment, Backend& backend, std::int64_t now_ms) {
  if (segment.frames.empty()) throw Error(ErrorCode::precondition, "segment has no frames", segment.id);
  state_.assigned_part = segment;

  auto bundle = config_.prompt_strategy ? build_prompt(segment, *taxonomy_, config_.prompt) : build_raw_prompt(segment);
  while (!state_.pending_observations.empty()) {
    const auto& o = state_.pending_observations.front();
    bundle.append_observation(o.category, o.text);
    state_.pending_observations.pop_front();
  }
  const auto& registry = config_.templates ? *config_.templates : TemplateRegistry::builtin();

  OutputRecord record;
  record.segment_id = segment.id;
  record.request_id = state_.rsu_id + "/" + segment.id + "/" + std::to_string(++next_request_);
  record.at = now_ms;
  record.prompt =
      render_prompt(bundle, config_.prompt_strategy ? config_.template_id : config_.raw_template_id, registry);

  BackendRequest request{record.request_id, record.prompt, bundle.frame_refs, std::nullopt};
  if (!segment.annotation.empty()) request.ground_truth = segment.annotation;

  std::vector<Alert> alerts;
  try {
    auto response = backend.infer(request);
    if (response.request_id != request.request_id) {
      throw Error(ErrorCode::malformed_response, "request_id mismatch", request.request_id);
    }
    record.narration = std::move(response.narration_text);
    record.reasoning = std::move(response.reasoning_text);
    record.latency_ms = response.latency_ms;
  } catch (const Error& e) {
    if (!e.is_backend_failure()) throw;
    record.failed = true;
    record.error = std::string(to_string(e.code())) + ": " + e.what();
    state_.outputs.push_back(std::move(record));
    return alerts;
  }

  if (!segment.annotation.items.empty()) {
    record.narration_score = score_narration(record.narration, segment.annotation.items, *taxonomy_).value;
  }
  if (!segment.annotation.reasoning.empty()) {
    const auto statements = extract_causal_statements(record.reasoning, *taxonomy_);
    record.reasoning_score = validate_reasoning(statements, segment.annotation.reasoning).value;
  }

  const std::vector<std::string> texts{record.narration, record.reasoning};
  for (const auto& label : detect_hazard(texts, config_.hazard_set, *taxonomy_)) {
    Alert alert;
    alert.alert_id = state_.rsu_id + "-a" + std::to_string(++next_alert_);
    alert.origin = state_.rsu_id;
    alert.hazard_label = label;
    auto evidence = excerpt(record.narration, *taxonomy_, label);
    if (!evidence) evidence = excerpt(record.reasoning, *taxonomy_, label);
    alert.evidence = evidence.value_or(record.narration.substr(0, 160));
    alert.timestamp = now_ms;
    record_alert(alert);
    record.alert_ids.push_back(alert.alert_id);
    alerts.push_back(std::move(alert));
  }
  state_.outputs.push_back(std::move(record));
  return alerts;
}

bool RsuNode::record_alert(const Alert& alert) {
  if (!state_.alerts_seen.insert(alert.alert_id).second) {
    ++state_.duplicate_alerts;
    return false;
  }
  state_.alerts.push_back(alert);
  return true;
}

bool RsuNode::handle_message(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error&) {
    ++state_.dropped_messages;
    return false;
  }
  return handle_message(doc);
}

bool RsuNode::handle_message(const json& document) {
  try {
    const auto envelope = parse_envelope(document);
    switch (envelope.type) {
      case MessageType::alert:
        return record_alert(parse_alert(envelope.payload));
      case MessageType::status:
        state_.peers[envelope.origin] = envelope.payload;
        return true;
      case MessageType::observation_relay: {
        auto o = parse_observation(envelope.payload);
        if (o.text.empty()) throw Error(ErrorCode::validation, "empty observation text");
        if (o.observation_id.empty()) o.observation_id = envelope.origin + "-relay-" + std::to_string(envelope.seq);
        state_.pending_observations.push_back(std::move(o));
        return true;
      }
    }
  } catch (const Error&) {
  }
  ++state_.dropped_messages;
  return false;
}

std::string RsuNode::accept_observation(Observation observation, std::int64_t now_ms) {
  if (observation.text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::validation, "observation text is empty", state_.rsu_id);
  }
  if (observation.observation_id.empty()) {
    observation.observation_id = state_.rsu_id + "-o" + std::to_string(++next_observation_);
  }
  observation.received_at = now_ms;
  auto id = observation.observation_id;
  state_.pending_observations.push_back(std::move(observation));
  return id;
}

}  // namespace rsu
