#include "rsu/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "rsu/error.hpp"
#include "rsu/text.hpp"

namespace rsu {

std::string_view stream_header(Category c) noexcept {
  switch (c) {
    case Category::environment: return kEnvironmentHeader;
    case Category::agent: return kAgentHeader;
    case Category::motion: return kMotionHeader;
  }
  return {};
}

FrameWindow trajectory_window(int keyframe, int last_index, int half_width) {
  return {std::max(0, keyframe - half_width), std::min(last_index, keyframe + half_width)};
}

namespace {

std::string none_stream(Category c) {
  return std::string(stream_header(c)) + "\n" + std::string(kNoneObserved);
}

std::string& stream_ref(PromptBundle& b, Category c) {
  switch (c) {
    case Category::environment: return b.environment_stream;
    case Category::agent: return b.agent_stream;
    case Category::motion: return b.motion_stream;
  }
  return b.motion_stream;
}

}  // namespace

const std::string& PromptBundle::stream(Category c) const {
  switch (c) {
    case Category::environment: return environment_stream;
    case Category::agent: return agent_stream;
    case Category::motion: return motion_stream;
  }
  return motion_stream;
}

void PromptBundle::append_observation(Category c, const std::string& text) {
  const auto line = "user report: " + text;
  if (!structured) {
    if (!raw_stream.empty()) raw_stream += "\n";
    raw_stream += line;
    return;
  }
  auto& s = stream_ref(*this, c);
  if (s.empty() || s == none_stream(c)) {
    s = std::string(stream_header(c)) + "\n" + line;
  } else {
    s += "\n" + line;
  }
}

PromptBundle build_prompt(const Segment& segment, const Taxonomy& taxonomy, const PromptConfig& config) {
  if (segment.frames.empty()) throw Error(ErrorCode::precondition, "segment has no frames", segment.id);
  if (config.window_half_width < 0) throw Error(ErrorCode::precondition, "window half-width must be >= 0");

  PromptBundle b;
  b.keyframes = select_keyframes(segment, config.keyframes);
  const int last = static_cast<int>(segment.frames.size()) - 1;
  for (int k : b.keyframes) b.windows.push_back(trajectory_window(k, last, config.window_half_width));

  std::vector<bool> in_window(segment.frames.size(), false);
  for (const auto& w : b.windows) {
    for (int i = w.lo; i <= w.hi; ++i) in_window[i] = true;
  }
  const std::set<int> keyset(b.keyframes.begin(), b.keyframes.end());

  std::ostringstream env, agent, motion;
  auto add_line = [](std::ostringstream& out, std::vector<int>& frames, int index, const std::string& text) {
    out << "\nframe " << index << ": " << text;
    if (frames.empty() || frames.back() != index) frames.push_back(index);
  };
  for (int i = 0; i <= last; ++i) {
    const auto& frame = segment.frames[i];
    if (in_window[i]) b.frame_refs.push_back(frame.image_ref);
    for (const auto& o : frame.observations) {
      switch (o.category) {
        case Category::environment:
          if (keyset.count(i)) add_line(env, b.environment_frames, i, o.text);
          break;
        case Category::agent:
          if (in_window[i]) add_line(agent, b.agent_frames, i, o.text);
          break;
        case Category::motion:
          if (in_window[i]) add_line(motion, b.motion_frames, i, o.text);
          break;
      }
    }
  }
  auto finish = [](Category c, const std::ostringstream& lines) {
    auto body = lines.str();
    if (body.empty()) return none_stream(c);
    return std::string(stream_header(c)) + body;
  };
  b.environment_stream = finish(Category::environment, env);
  b.agent_stream = finish(Category::agent, agent);
  b.motion_stream = finish(Category::motion, motion);

  if (config.context_examples > 0) {
    std::set<std::size_t> present;
    for (const auto* s : {&b.environment_stream, &b.agent_stream, &b.motion_stream}) {
      for (const auto& m : taxonomy.scan(tokenize(*s))) present.insert(m.entry);
    }
    std::vector<std::size_t> by_cat[3];
    for (auto idx : present) by_cat[static_cast<int>(taxonomy.entry(idx).category)].push_back(idx);
    std::vector<std::string> lines;
    const std::pair<int, int> order[] = {{0, 1}, {0, 2}, {1, 2}};
    for (auto [a, c] : order) {
      for (auto i : by_cat[a]) {
        for (auto j : by_cat[c]) {
          if (lines.size() >= config.context_examples) break;
          lines.push_back("- " + make_enrichment_pair(taxonomy.entry(i), taxonomy.entry(j)).describe());
        }
      }
    }
    if (!lines.empty()) b.context = join(lines, "\n");
  }
  return b;
}

PromptBundle build_raw_prompt(const Segment& segment) {
  if (segment.frames.empty()) throw Error(ErrorCode::precondition, "segment has no frames", segment.id);
  PromptBundle b;
  b.structured = false;
  std::vector<std::string> lines;
  for (const auto& frame : segment.frames) {
    b.frame_refs.push_back(frame.image_ref);
    for (const auto& o : frame.observations) {
      lines.push_back(o.text);
      auto& frames = o.category == Category::environment ? b.environment_frames
                     : o.category == Category::agent     ? b.agent_frames
                                                         : b.motion_frames;
      if (frames.empty() || frames.back() != frame.index) frames.push_back(frame.index);
    }
  }
  b.raw_stream = join(lines, "\n");
  return b;
}

EnrichmentPair make_enrichment_pair(const KeywordEntry& a, const KeywordEntry& b) {
  const auto& [first, second] =
      static_cast<int>(a.category) <= static_cast<int>(b.category) ? std::tie(a, b) : std::tie(b, a);
  std::string tmpl;
  if (first.category == Category::environment && second.category == Category::agent) {
    tmpl = "{second} observed with {first}";
  } else if (first.category == Category::environment) {
    tmpl = "{second} occurring with {first}";
  } else {
    tmpl = "{first} {second}";
  }
  return {first, second, std::move(tmpl)};
}

std::string EnrichmentPair::describe() const {
  std::string out = description_template;
  auto replace = [&out](std::string_view slot, const std::string& value) {
    if (auto pos = out.find(slot); pos != std::string::npos) out.replace(pos, slot.size(), value);
  };
  replace("{first}", first.label);
  replace("{second}", second.label);
  return out;
}

std::vector<EnrichmentPair> generate_enrichment_corpus(const Taxonomy& taxonomy) {
  const auto env = taxonomy.indices_in(Category::environment);
  const auto agent = taxonomy.indices_in(Category::agent);
  const auto motion = taxonomy.indices_in(Category::motion);
  std::vector<EnrichmentPair> corpus;
  corpus.reserve(env.size() * agent.size() + env.size() * motion.size() + agent.size() * motion.size());
  auto cross = [&](const std::vector<std::size_t>& xs, const std::vector<std::size_t>& ys) {
    for (auto x : xs) {
      for (auto y : ys) corpus.push_back(make_enrichment_pair(taxonomy.entry(x), taxonomy.entry(y)));
    }
  };
  cross(env, agent);
  cross(env, motion);
  cross(agent, motion);
  return corpus;
}

namespace {

constexpr const char* kDefaultTemplate =
    "You are the narration model of a roadside unit.\n"
    "Narration: list the environment conditions, agents with counts, and their motions.\n"
    "Reasoning: explain each motion with 'because', naming environment and agent causes.\n"
    "{context}\n"
    "{environment}\n\n"
    "{agent}\n\n"
    "{motion}\n";

constexpr const char* kRawTemplate =
    "You are the narration model of a roadside unit.\n"
    "Describe the driving scene and explain the driving behavior.\n\n"
    "{observations}\n";

void check_template(const std::string& id, const std::string& text) {
  const auto e = text.find("{environment}");
  const auto a = text.find("{agent}");
  const auto m = text.find("{motion}");
  const bool streams = e != std::string::npos && a != std::string::npos && m != std::string::npos;
  if (streams && !(e < a && a < m)) {
    throw Error(ErrorCode::validation, "stream slots must appear as environment, agent, motion", id);
  }
  if (!streams && text.find("{observations}") == std::string::npos) {
    throw Error(ErrorCode::validation, "template has neither stream slots nor {observations}", id);
  }
}

}  // namespace

TemplateRegistry::TemplateRegistry() = default;

const TemplateRegistry& TemplateRegistry::builtin() {
  static const TemplateRegistry registry = [] {
    TemplateRegistry r;
    r.add("default", kDefaultTemplate);
    r.add("raw", kRawTemplate);
    return r;
  }();
  return registry;
}

void TemplateRegistry::add(const std::string& id, std::string text) {
  check_template(id, text);
  templates_[id] = std::move(text);
}

void TemplateRegistry::load_file(const std::string& id, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open template", path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  add(id, buf.str());
}

void TemplateRegistry::load_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) load_file(f.stem().string(), f);
}

const std::string& TemplateRegistry::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error(ErrorCode::not_found, "unknown template_id '" + id + "'");
  return it->second;
}

std::string render_prompt(const PromptBundle& bundle, const std::string& template_id,
                          const TemplateRegistry& registry) {
  const auto& tmpl = registry.get(template_id);
  std::string observations;
  std::string environment, agent, motion;
  if (bundle.structured) {
    environment = bundle.environment_stream.empty() ? none_stream(Category::environment) : bundle.environment_stream;
    agent = bundle.agent_stream.empty() ? none_stream(Category::agent) : bundle.agent_stream;
    motion = bundle.motion_stream.empty() ? none_stream(Category::motion) : bundle.motion_stream;
    observations = environment + "\n\n" + agent + "\n\n" + motion;
  } else {
    observations = bundle.raw_stream;
  }
  const std::string context = bundle.context.empty() ? "" : "Reference scenes:\n" + bundle.context + "\n";
  const std::pair<std::string_view, const std::string*> slots[] = {
      {"{environment}", &environment}, {"{agent}", &agent},     {"{motion}", &motion},
      {"{observations}", &observations}, {"{context}", &context},
  };

  std::string out;
  out.reserve(tmpl.size() + observations.size() * 2);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [slot, value] : slots) {
        if (tmpl.compare(i, slot.size(), slot) == 0) {
          out += *value;
          i += slot.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[i++]);
  }
  return out;
}

}  // namespace rsu
