#include "rsu/segments.hpp"

#include <fstream>
#include <istream>

#include "rsu/error.hpp"

namespace rsu {

using nlohmann::json;

KeyframePolicy KeyframePolicy::parse(const std::string& text) {
  if (text == "first") return first_frame();
  std::string digits;
  if (text.rfind("stride:", 0) == 0) {
    digits = text.substr(7);
  } else if (text.rfind("stride(", 0) == 0 && !text.empty() && text.back() == ')') {
    digits = text.substr(7, text.size() - 8);
  } else {
    throw Error(ErrorCode::parse, "unknown keyframe policy '" + text + "'");
  }
  int k = 0;
  try {
    std::size_t used = 0;
    k = std::stoi(digits, &used);
    if (used != digits.size()) throw std::invalid_argument(digits);
  } catch (const std::exception&) {
    throw Error(ErrorCode::parse, "bad stride in keyframe policy '" + text + "'");
  }
  if (k <= 0) throw Error(ErrorCode::precondition, "keyframe stride must be positive");
  return every(k);
}

std::string KeyframePolicy::to_string() const {
  return kind == Kind::first ? "first" : "stride:" + std::to_string(stride);
}

namespace {

Category category_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw Error(ErrorCode::parse, std::string("missing string field '") + key + "'");
  }
  const auto name = j.at(key).get<std::string>();
  auto c = parse_category(name);
  if (!c) throw Error(ErrorCode::validation, "unknown annotation category '" + name + "'");
  return *c;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::parse, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::parse, std::string("wrong type for field '") + key + "'");
  }
}

void resolve_item(AnnotationItem& item, const Taxonomy& taxonomy) {
  auto idx = taxonomy.find(item.label);
  if (!idx) throw Error(ErrorCode::validation, "annotation label '" + item.label + "' not in taxonomy");
  const auto& entry = taxonomy.entry(*idx);
  if (entry.category != item.category) {
    throw Error(ErrorCode::validation, "annotation label '" + item.label + "' is not a " +
                                           std::string(to_string(item.category)) + " keyword");
  }
  item.label = entry.label;
}

}  // namespace

AnnotationItem parse_annotation_item(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::parse, "annotation item must be an object");
  AnnotationItem item;
  item.category = category_field(j, "category");
  item.label = required<std::string>(j, "label");
  if (item.label.empty()) throw Error(ErrorCode::validation, "empty annotation label");
  if (j.contains("count") && !j.at("count").is_null()) {
    item.count = required<int>(j, "count");
    if (*item.count <= 0) throw Error(ErrorCode::validation, "annotation count must be positive");
    if (item.category != Category::agent) {
      throw Error(ErrorCode::validation, "count is only allowed on agent items");
    }
  }
  return item;
}

Segment parse_segment(const json& record, const Taxonomy* taxonomy) {
  if (!record.is_object()) throw Error(ErrorCode::parse, "record must be an object");
  Segment s;
  s.id = required<std::string>(record, "id");
  if (s.id.empty()) throw Error(ErrorCode::validation, "empty segment id");
  s.source_clip = required<std::string>(record, "source_clip");
  const auto& frames = record.contains("frames") ? record.at("frames") : json();
  if (!frames.is_array()) throw Error(ErrorCode::parse, "missing array field 'frames'");
  if (frames.empty()) throw Error(ErrorCode::validation, "segment has no frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    FrameRecord fr;
    fr.index = required<int>(f, "index");
    fr.timestamp_ms = required<std::int64_t>(f, "timestamp_ms");
    fr.image_ref = required<std::string>(f, "image_ref");
    if (fr.index != static_cast<int>(i)) {
      throw Error(ErrorCode::validation, "non-contiguous at index " + std::to_string(i));
    }
    if (i > 0 && fr.timestamp_ms < s.frames.back().timestamp_ms) {
      throw Error(ErrorCode::validation, "timestamp decreases at index " + std::to_string(i));
    }
    if (f.contains("observations")) {
      const auto& obs = f.at("observations");
      if (!obs.is_array()) throw Error(ErrorCode::parse, "'observations' must be an array");
      for (const auto& o : obs) {
        fr.observations.push_back({category_field(o, "category"), required<std::string>(o, "text")});
      }
    }
    s.frames.push_back(std::move(fr));
  }
  if (record.contains("annotation") && !record.at("annotation").is_null()) {
    const auto& a = record.at("annotation");
    if (a.contains("items")) {
      for (const auto& it : a.at("items")) s.annotation.items.push_back(parse_annotation_item(it));
    }
    if (a.contains("reasoning")) {
      for (const auto& st : a.at("reasoning")) {
        CausalStatement cs;
        for (const auto& it : required<json>(st, "causes")) cs.causes.push_back(parse_annotation_item(it));
        for (const auto& it : required<json>(st, "effects")) cs.effects.push_back(parse_annotation_item(it));
        if (cs.causes.empty() || cs.effects.empty()) {
          throw Error(ErrorCode::validation, "causal statement needs causes and effects");
        }
        s.annotation.reasoning.push_back(std::move(cs));
      }
    }
  }
  if (taxonomy) {
    for (auto& item : s.annotation.items) resolve_item(item, *taxonomy);
    for (auto& st : s.annotation.reasoning) {
      for (auto& item : st.causes) resolve_item(item, *taxonomy);
      for (auto& item : st.effects) resolve_item(item, *taxonomy);
    }
  }
  return s;
}

std::vector<Segment> load_manifest(std::istream& in, const std::string& source_name,
                                   const Taxonomy* taxonomy) {
  std::vector<Segment> segments;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto context = source_name + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse, std::string("malformed record: ") + e.what(), context);
    }
    try {
      auto seg = parse_segment(record, taxonomy);
      for (const auto& prev : segments) {
        if (prev.id == seg.id) throw Error(ErrorCode::duplicate, "duplicate segment id '" + seg.id + "'");
      }
      segments.push_back(std::move(seg));
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), context);
    }
  }
  return segments;
}

std::vector<Segment> load_manifest_file(const std::filesystem::path& path, const Taxonomy* taxonomy) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open manifest", path.string());
  return load_manifest(in, path.string(), taxonomy);
}

json to_json(const AnnotationItem& item) {
  json j{{"category", to_string(item.category)}, {"label", item.label}};
  if (item.count) j["count"] = *item.count;
  return j;
}

json to_json(const CausalStatement& statement) {
  json j{{"causes", json::array()}, {"effects", json::array()}};
  for (const auto& c : statement.causes) j["causes"].push_back(to_json(c));
  for (const auto& e : statement.effects) j["effects"].push_back(to_json(e));
  if (!statement.actors.empty()) {
    j["actors"] = json::array();
    for (const auto& a : statement.actors) j["actors"].push_back(to_json(a));
  }
  return j;
}

json to_json(const Segment& segment) {
  json frames = json::array();
  for (const auto& f : segment.frames) {
    json obs = json::array();
    for (const auto& o : f.observations) obs.push_back({{"category", to_string(o.category)}, {"text", o.text}});
    frames.push_back({{"index", f.index}, {"timestamp_ms", f.timestamp_ms}, {"image_ref", f.image_ref},
                      {"observations", std::move(obs)}});
  }
  json items = json::array();
  for (const auto& i : segment.annotation.items) items.push_back(to_json(i));
  json reasoning = json::array();
  for (const auto& r : segment.annotation.reasoning) reasoning.push_back(to_json(r));
  return {{"id", segment.id},
          {"source_clip", segment.source_clip},
          {"frames", std::move(frames)},
          {"annotation", {{"items", std::move(items)}, {"reasoning", std::move(reasoning)}}}};
}

std::vector<Segment> split_segment(const Segment& segment, int parts) {
  const auto total = static_cast<int>(segment.frames.size());
  if (parts <= 0) throw Error(ErrorCode::precondition, "part count must be positive", segment.id);
  if (parts > total) {
    throw Error(ErrorCode::precondition,
                "cannot split " + std::to_string(total) + " frames into " + std::to_string(parts) + " parts",
                segment.id);
  }
  std::vector<Segment> out;
  out.reserve(parts);
  const int base = total / parts;
  const int remainder = total % parts;
  int begin = 0;
  for (int p = 0; p < parts; ++p) {
    const int size = base + (p < remainder ? 1 : 0);
    Segment part;
    part.id = segment.id + "#" + std::to_string(p + 1);
    part.source_clip = segment.source_clip;
    part.annotation = segment.annotation;
    part.frame_offset = segment.frame_offset + begin;
    part.frames.assign(segment.frames.begin() + begin, segment.frames.begin() + begin + size);
    for (int i = 0; i < size; ++i) part.frames[i].index = i;
    out.push_back(std::move(part));
    begin += size;
  }
  return out;
}

std::vector<int> select_keyframes(const Segment& segment, const KeyframePolicy& policy) {
  if (segment.frames.empty()) throw Error(ErrorCode::precondition, "segment has no frames", segment.id);
  if (policy.kind == KeyframePolicy::Kind::first) return {0};
  if (policy.stride <= 0) throw Error(ErrorCode::precondition, "keyframe stride must be positive");
  std::vector<int> out;
  const auto n = static_cast<int>(segment.frames.size());
  for (int i = 0; i < n; i += policy.stride) out.push_back(i);
  return out;
}

}  // namespace rsu
