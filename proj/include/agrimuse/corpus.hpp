#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "agrimuse/error.hpp"
#include "agrimuse/vocabulary.hpp"

namespace agrimuse {

struct VideoItem {
  std::string id;
  std::string title;
  int topic_id = 0;
  int frame_count = 32;
};

struct Room {
  int index = 1;  // 1-based position in the museum
  int topic_id = 0;
  std::vector<VideoItem> videos;
};

struct Museum {
  std::string id;
  std::vector<Room> rooms;

  std::size_t video_count() const {
    std::size_t n = 0;
    for (const auto& r : rooms) n += r.videos.size();
    return n;
  }
};

struct Corpus {
  std::vector<Museum> museums;
  TopicVocabulary vocabulary;
};

enum class DescriptionStyle { kLong, kBrief };

inline std::string to_string(DescriptionStyle s) {
  return s == DescriptionStyle::kLong ? "long" : "brief";
}

struct Description {
  std::string museum_id;
  std::string text;
  std::vector<std::string> sentences;
  DescriptionStyle style = DescriptionStyle::kLong;
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Sampling configuration for the synthetic corpus. The categorical weights
/// are indexed from the lower end of each range; their defaults put the
/// expected means at 4.57 rooms per museum and 2.50 videos per room.
struct CorpusConfig {
  int museum_count = 457;
  int min_rooms = 3;
  int max_rooms = 8;
  int min_videos = 2;
  int max_videos = 4;
  std::vector<double> room_weights{0.31, 0.25, 0.18, 0.13, 0.08, 0.05};
  std::vector<double> video_weights{0.60, 0.30, 0.10};
  int frames_per_video = 32;
  std::string id_prefix = "M";
};

struct CorpusStats {
  std::size_t museums = 0;
  std::size_t rooms = 0;
  std::size_t videos = 0;
  double avg_rooms_per_museum = 0.0;
  double avg_videos_per_room = 0.0;
  double avg_videos_per_museum = 0.0;

  /// Two-decimal rendering, e.g. "museums=457 rooms/museum=4.57 ...".
  std::string to_string() const {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "museums=%zu rooms=%zu videos=%zu rooms/museum=%.2f "
                  "videos/room=%.2f videos/museum=%.2f",
                  museums, rooms, videos, avg_rooms_per_museum,
                  avg_videos_per_room, avg_videos_per_museum);
    return buf;
  }
};

// ---------------------------------------------------------------------------
// Number words

inline std::string number_word(int n) {
  static constexpr std::array<std::string_view, 9> kWords{
      "zero", "one", "two", "three", "four", "five", "six", "seven", "eight"};
  if (n < 1 || n > 8) {
    throw InputError("unsupported count for number word: " + std::to_string(n));
  }
  return std::string(kWords[static_cast<std::size_t>(n)]);
}

inline std::string ordinal_word(int n) {
  static constexpr std::array<std::string_view, 9> kWords{
      "",      "first",   "second",  "third", "fourth",
      "fifth", "sixth",   "seventh", "eighth"};
  if (n < 1 || n > 8) {
    throw InputError("unsupported ordinal: " + std::to_string(n));
  }
  return std::string(kWords[static_cast<std::size_t>(n)]);
}

/// Inverse of number_word; 0 when `w` is not a known number word.
inline int parse_number_word(std::string_view w) {
  for (int n = 1; n <= 8; ++n) {
    if (w == number_word(n)) return n;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Generation

inline void validate(const CorpusConfig& cfg, const TopicVocabulary& vocab) {
  if (cfg.museum_count < 0) throw ConfigError("museum_count must be >= 0");
  if (cfg.min_rooms < 1 || cfg.min_rooms > cfg.max_rooms) {
    throw ConfigError("room range is empty or inverted");
  }
  if (cfg.min_videos < 1 || cfg.min_videos > cfg.max_videos) {
    throw ConfigError("videos-per-room range is empty or inverted");
  }
  if (cfg.frames_per_video < 1) throw ConfigError("frames_per_video must be >= 1");
  if (static_cast<std::size_t>(cfg.max_rooms) > vocab.size()) {
    throw ConfigError("vocabulary too small for distinct room topics");
  }
  for (const auto& t : vocab) {
    if (static_cast<std::size_t>(cfg.max_videos) > t.titles.size()) {
      throw ConfigError("topic '" + t.phrase + "' has fewer titles than max_videos");
    }
  }
  auto check_weights = [](const std::vector<double>& w, int span, const char* what) {
    if (w.empty()) return;
    if (static_cast<int>(w.size()) != span) {
      throw ConfigError(std::string(what) + " weights do not match the range");
    }
    double sum = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw ConfigError(std::string(what) + " weights must be >= 0");
      sum += x;
    }
    if (!(sum > 0.0)) throw ConfigError(std::string(what) + " weights sum to zero");
  };
  check_weights(cfg.room_weights, cfg.max_rooms - cfg.min_rooms + 1, "room");
  check_weights(cfg.video_weights, cfg.max_videos - cfg.min_videos + 1, "video");
}

namespace detail {

inline std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
  return s;
}

template <typename Rng>
int draw_count(Rng& rng, int lo, int hi, const std::vector<double>& weights) {
  if (weights.empty()) return std::uniform_int_distribution<int>(lo, hi)(rng);
  std::discrete_distribution<int> d(weights.begin(), weights.end());
  return lo + d(rng);
}

}  // namespace detail

/// Deterministic for a fixed (seed, config, vocabulary). Rooms in a museum
/// draw distinct topics; videos in a room draw distinct titles of that topic.
inline Corpus generate_corpus(std::uint64_t seed, const CorpusConfig& cfg = {},
                              TopicVocabulary vocab = builtin_vocabulary()) {
  validate(cfg, vocab);
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.museums.reserve(static_cast<std::size_t>(cfg.museum_count));

  std::vector<int> topic_pool(vocab.size());
  for (int m = 0; m < cfg.museum_count; ++m) {
    Museum museum;
    museum.id = cfg.id_prefix + detail::zero_pad(static_cast<std::size_t>(m + 1), 4);
    const int n_rooms = detail::draw_count(rng, cfg.min_rooms, cfg.max_rooms, cfg.room_weights);

    std::iota(topic_pool.begin(), topic_pool.end(), 0);
    for (int r = 0; r < n_rooms; ++r) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(r),
                                                      topic_pool.size() - 1);
      std::swap(topic_pool[static_cast<std::size_t>(r)], topic_pool[pick(rng)]);
    }

    for (int r = 0; r < n_rooms; ++r) {
      Room room;
      room.index = r + 1;
      room.topic_id = topic_pool[static_cast<std::size_t>(r)];
      const auto& topic = vocab[static_cast<std::size_t>(room.topic_id)];
      const int n_videos =
          detail::draw_count(rng, cfg.min_videos, cfg.max_videos, cfg.video_weights);

      std::vector<std::size_t> title_idx(topic.titles.size());
      std::iota(title_idx.begin(), title_idx.end(), std::size_t{0});
      for (int v = 0; v < n_videos; ++v) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(v),
                                                        title_idx.size() - 1);
        std::swap(title_idx[static_cast<std::size_t>(v)], title_idx[pick(rng)]);
        VideoItem video;
        video.id = museum.id + "-R" + std::to_string(r + 1) + "-V" + std::to_string(v + 1);
        video.title = topic.titles[title_idx[static_cast<std::size_t>(v)]];
        video.topic_id = room.topic_id;
        video.frame_count = cfg.frames_per_video;
        room.videos.push_back(std::move(video));
      }
      museum.rooms.push_back(std::move(room));
    }
    corpus.museums.push_back(std::move(museum));
  }
  corpus.vocabulary = std::move(vocab);
  return corpus;
}

inline CorpusStats corpus_stats(std::span<const Museum> museums) {
  if (museums.empty()) throw InputError("corpus_stats: empty corpus");
  CorpusStats s;
  s.museums = museums.size();
  for (const auto& m : museums) {
    s.rooms += m.rooms.size();
    s.videos += m.video_count();
  }
  s.avg_rooms_per_museum = static_cast<double>(s.rooms) / static_cast<double>(s.museums);
  s.avg_videos_per_museum = static_cast<double>(s.videos) / static_cast<double>(s.museums);
  s.avg_videos_per_room =
      s.rooms == 0 ? 0.0 : static_cast<double>(s.videos) / static_cast<double>(s.rooms);
  return s;
}

// ---------------------------------------------------------------------------
// Descriptions

namespace detail {

inline std::string join_sentences(const std::vector<std::string>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

inline std::string count_phrase(int n, std::string_view noun) {
  return number_word(n) + " " + std::string(noun) + (n == 1 ? "" : "s");
}

inline void check_room_count(const Museum& museum) {
  const auto n = museum.rooms.size();
  if (n < 1 || n > 8) {
    throw InputError("museum " + museum.id + " has " + std::to_string(n) +
                     " rooms; ordinals are supported up to eighth");
  }
}

}  // namespace detail

/// Long-form description: an opening sentence with the room count, then for
/// each room its video count followed by one sentence per video title.
inline Description render_description(const Museum& museum) {
  detail::check_room_count(museum);
  Description d;
  d.museum_id = museum.id;
  d.style = DescriptionStyle::kLong;
  const int n_rooms = static_cast<int>(museum.rooms.size());
  d.sentences.push_back("This museum has " + detail::count_phrase(n_rooms, "room") + ".");
  for (std::size_t r = 0; r < museum.rooms.size(); ++r) {
    const auto& room = museum.rooms[r];
    const int n_videos = static_cast<int>(room.videos.size());
    d.sentences.push_back("The " + ordinal_word(static_cast<int>(r) + 1) + " room has " +
                          detail::count_phrase(n_videos, "video") + ".");
    for (std::size_t v = 0; v < room.videos.size(); ++v) {
      d.sentences.push_back("The " + ordinal_word(static_cast<int>(v) + 1) +
                            " video is about " + room.videos[v].title + ".");
    }
  }
  d.text = detail::join_sentences(d.sentences);
  return d;
}

/// Brief description: opening room count plus one sentence per room giving
/// its video count and topic phrase.
inline Description render_brief_description(const Museum& museum,
                                            const TopicVocabulary& vocab) {
  detail::check_room_count(museum);
  Description d;
  d.museum_id = museum.id;
  d.style = DescriptionStyle::kBrief;
  const int n_rooms = static_cast<int>(museum.rooms.size());
  d.sentences.push_back(n_rooms == 1 ? std::string("In this museum there is one room.")
                                     : "In this museum there are " +
                                           number_word(n_rooms) + " rooms.");
  for (std::size_t r = 0; r < museum.rooms.size(); ++r) {
    const auto& room = museum.rooms[r];
    if (room.topic_id < 0 || static_cast<std::size_t>(room.topic_id) >= vocab.size()) {
      throw InputError("room topic id out of vocabulary range");
    }
    const int n_videos = static_cast<int>(room.videos.size());
    d.sentences.push_back("In the " + ordinal_word(static_cast<int>(r) + 1) + " room, there " +
                          (n_videos == 1 ? "is " : "are ") +
                          detail::count_phrase(n_videos, "video") + " about " +
                          vocab[static_cast<std::size_t>(room.topic_id)].phrase + ".");
  }
  d.text = detail::join_sentences(d.sentences);
  return d;
}

/// Splits on '.' followed by whitespace or end of text. Fragments keep their
/// period, are trimmed, and empty ones are dropped.
inline std::vector<std::string> split_sentences(std::string_view text) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  auto push_trimmed = [&](std::vector<std::string>& out, std::string_view frag) {
    while (!frag.empty() && is_space(frag.front())) frag.remove_prefix(1);
    while (!frag.empty() && is_space(frag.back())) frag.remove_suffix(1);
    if (!frag.empty()) out.emplace_back(frag);
  };
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '.' && (i + 1 == text.size() || is_space(text[i + 1]))) {
      push_trimmed(out, text.substr(start, i + 1 - start));
      start = i + 1;
    }
  }
  if (start < text.size()) push_trimmed(out, text.substr(start));
  return out;
}

// ---------------------------------------------------------------------------
// Sentence tagging

enum class SentenceKind { kMuseumCount, kRoomCount, kTopic };

struct SentenceTag {
  SentenceKind kind;
  int value;  // stated count, or topic id

  bool operator==(const SentenceTag&) const = default;
};

/// Maps rendered sentences back to the structure count or topic they state.
class SentenceTagger {
 public:
  explicit SentenceTagger(const TopicVocabulary& vocab) {
    for (const auto& t : vocab) {
      by_phrase_.emplace(t.phrase, t.topic_id);
      for (const auto& title : t.titles) by_title_.emplace(title, t.topic_id);
    }
  }

  /// Throws InputError when the sentence matches no template.
  SentenceTag tag(const std::string& sentence) const {
    static const std::regex kMuseumLong(R"(^This museum has (\w+) rooms?\.$)");
    static const std::regex kMuseumBrief(R"(^In this museum there (?:are|is) (\w+) rooms?\.$)");
    static const std::regex kRoom(R"(^The \w+ room has (\w+) videos?\.$)");
    static const std::regex kVideo(R"(^The \w+ video is about (.+)\.$)");
    static const std::regex kRoomBrief(R"(^In the \w+ room, there (?:are|is) \w+ videos? about (.+)\.$)");

    std::smatch m;
    if (std::regex_match(sentence, m, kMuseumLong) || std::regex_match(sentence, m, kMuseumBrief)) {
      if (int n = parse_number_word(m[1].str()); n > 0) return {SentenceKind::kMuseumCount, n};
    } else if (std::regex_match(sentence, m, kRoom)) {
      if (int n = parse_number_word(m[1].str()); n > 0) return {SentenceKind::kRoomCount, n};
    } else if (std::regex_match(sentence, m, kVideo)) {
      if (auto it = by_title_.find(m[1].str()); it != by_title_.end()) {
        return {SentenceKind::kTopic, it->second};
      }
    } else if (std::regex_match(sentence, m, kRoomBrief)) {
      if (auto it = by_phrase_.find(m[1].str()); it != by_phrase_.end()) {
        return {SentenceKind::kTopic, it->second};
      }
    }
    throw InputError("sentence not attributable to a topic or structure template: \"" +
                     sentence + "\"");
  }

 private:
  std::unordered_map<std::string, int> by_title_;
  std::unordered_map<std::string, int> by_phrase_;
};

// ---------------------------------------------------------------------------
// Splitting

/// Shuffles ids by `seed`, then partitions with floor shares; leftover
/// museums go to test first, then validation.
inline CorpusSplit split_corpus(std::span<const Museum> museums,
                                std::array<double, 3> ratios = {0.70, 0.15, 0.15},
                                std::uint64_t seed = 0) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::vector<std::string> ids;
  ids.reserve(museums.size());
  for (const auto& m : museums) ids.push_back(m.id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto n = ids.size();
  std::array<std::size_t, 3> sizes{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[i] + 1e-9));
    assigned += sizes[i];
  }
  // At most two museums are left over after flooring three shares.
  for (std::size_t k : {2u, 1u, 0u}) {
    if (assigned >= n) break;
    ++sizes[k];
    ++assigned;
  }

  CorpusSplit split;
  auto it = ids.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  split.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  split.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes[2]));
  return split;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Corpus& corpus) {
  using nlohmann::json;
  json museums = json::array();
  for (const auto& m : corpus.museums) {
    json rooms = json::array();
    for (const auto& r : m.rooms) {
      json videos = json::array();
      for (const auto& v : r.videos) {
        videos.push_back({{"id", v.id},
                          {"title", v.title},
                          {"topic_id", v.topic_id},
                          {"frame_count", v.frame_count}});
      }
      rooms.push_back({{"index", r.index}, {"topic_id", r.topic_id}, {"videos", videos}});
    }
    museums.push_back({{"id", m.id}, {"rooms", rooms}});
  }
  json vocab = json::array();
  for (const auto& t : corpus.vocabulary) {
    vocab.push_back({{"topic_id", t.topic_id}, {"phrase", t.phrase}, {"titles", t.titles}});
  }
  return {{"museums", museums}, {"vocabulary", vocab}};
}

inline Corpus corpus_from_json(const nlohmann::json& j) {
  try {
    Corpus c;
    for (const auto& t : j.at("vocabulary")) {
      TopicEntry e;
      e.topic_id = t.at("topic_id").get<int>();
      e.phrase = t.at("phrase").get<std::string>();
      e.titles = t.at("titles").get<std::vector<std::string>>();
      c.vocabulary.push_back(std::move(e));
    }
    for (const auto& jm : j.at("museums")) {
      Museum m;
      m.id = jm.at("id").get<std::string>();
      for (const auto& jr : jm.at("rooms")) {
        Room r;
        r.index = jr.at("index").get<int>();
        r.topic_id = jr.at("topic_id").get<int>();
        for (const auto& jv : jr.at("videos")) {
          VideoItem v;
          v.id = jv.at("id").get<std::string>();
          v.title = jv.at("title").get<std::string>();
          v.topic_id = jv.at("topic_id").get<int>();
          v.frame_count = jv.at("frame_count").get<int>();
          r.videos.push_back(std::move(v));
        }
        m.rooms.push_back(std::move(r));
      }
      c.museums.push_back(std::move(m));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed corpus document: ") + e.what());
  }
}

inline void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << to_json(corpus).dump(1) << '\n';
}

inline Corpus read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open corpus file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse " + path + ": " + e.what());
  }
  return corpus_from_json(j);
}

inline void write_descriptions(const std::string& path, std::span<const Description> descs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  for (const auto& d : descs) {
    nlohmann::json j{{"museum_id", d.museum_id}, {"style", to_string(d.style)}, {"text", d.text}};
    out << j.dump() << '\n';
  }
}

inline std::vector<Description> read_descriptions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open descriptions file " + path);
  std::vector<Description> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Description d;
      d.museum_id = j.at("museum_id").get<std::string>();
      d.style = j.at("style").get<std::string>() == "brief" ? DescriptionStyle::kBrief
                                                            : DescriptionStyle::kLong;
      d.text = j.at("text").get<std::string>();
      d.sentences = split_sentences(d.text);
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("malformed description line in " + path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace agrimuse
