#include "stamo/kb.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace stamo {

KnowledgeBase::KnowledgeBase(std::vector<Entity> entities) : entities_(std::move(entities)) {
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    const Entity& e = entities_[i];
    if (e.id.value != i)
      throw DataError("entity ids must be dense and ordered; expected " + std::to_string(i) +
                      ", got " + std::to_string(e.id.value));
    if (e.aliases.empty()) throw DataError("entity " + std::to_string(i) + " has no aliases");
    if (e.is_emerging) {
      if (emerging_) throw DataError("knowledge base has more than one emerging entity");
      if (i + 1 != entities_.size())
        throw DataError("emerging entity must occupy the last index");
      if (e.aliases.size() > 3) throw DataError("emerging entity has more than 3 aliases");
      emerging_ = e.id;
    }
  }
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

KnowledgeBase load_kb_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open KB file " + path);
  std::vector<Entity> entities;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 4)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 4 columns");
    Entity e;
    try {
      e.id.value = static_cast<std::uint32_t>(std::stoul(cols[0]));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad entity id");
    }
    e.canonical_name = cols[1];
    e.aliases = split(cols[2], '|');
    if (cols[3] != "0" && cols[3] != "1")
      throw DataError(path + ":" + std::to_string(lineno) + ": is_emerging must be 0 or 1");
    e.is_emerging = cols[3] == "1";
    entities.push_back(std::move(e));
  }
  return KnowledgeBase(std::move(entities));
}

void save_kb_tsv(const KnowledgeBase& kb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write KB file " + path);
  for (const Entity& e : kb.entities()) {
    out << e.id.value << '\t' << e.canonical_name << '\t';
    for (std::size_t i = 0; i < e.aliases.size(); ++i) out << (i ? "|" : "") << e.aliases[i];
    out << '\t' << (e.is_emerging ? 1 : 0) << '\n';
  }
}

const std::vector<EntityId>& AliasDictionary::lookup(std::string_view surface) const {
  static const std::vector<EntityId> kEmpty;
  auto idx = mention_index(surface);
  return idx == kNoMention ? kEmpty : candidates_[idx];
}

std::uint32_t AliasDictionary::mention_index(std::string_view surface) const {
  auto it = index_.find(surface);
  return it == index_.end() ? kNoMention : it->second;
}

AliasDictionary build_alias_dictionary(const std::vector<Entity>& entities) {
  std::set<std::uint32_t> seen;
  std::map<std::string, std::set<EntityId>> inverted;
  for (const Entity& e : entities) {
    if (!seen.insert(e.id.value).second)
      throw DataError("duplicate entity id " + std::to_string(e.id.value));
    for (const auto& a : e.aliases) inverted[a].insert(e.id);
  }
  AliasDictionary dict;
  for (auto& [alias, ids] : inverted) {
    dict.index_.emplace(alias, static_cast<std::uint32_t>(dict.vocab_.size()));
    dict.vocab_.push_back(alias);
    dict.candidates_.emplace_back(ids.begin(), ids.end());
  }
  return dict;
}

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

void validate_document(const Document& doc) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& m = doc.mentions[i];
    const std::string where = doc.doc_id + " mention " + std::to_string(i);
    if (m.start >= m.end || m.end > doc.tokens.size())
      throw DataError(where + ": span out of bounds");
    if (i > 0 && m.start < prev_end) throw DataError(where + ": spans overlap or are unsorted");
    if (join_tokens(doc.tokens, m.start, m.end) != m.surface)
      throw DataError(where + ": surface does not match tokens");
    prev_end = m.end;
  }
}

CandidateSet candidates_for(std::string_view surface, const AliasDictionary& dict,
                            const PriorLookup& prior, LinkMode mode) {
  CandidateSet out;
  out.candidates = dict.lookup(surface);
  if (mode == LinkMode::Test) return out;

  if (prior) {
    std::vector<std::pair<double, EntityId>> ranked;
    ranked.reserve(out.candidates.size());
    for (EntityId e : out.candidates) ranked.emplace_back(prior(e), e);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; i < out.candidates.size(); ++i) out.candidates[i] = ranked[i].second;
  }
  if (out.candidates.size() > kTrainCandidateLimit) {
    out.candidates.resize(kTrainCandidateLimit);
    out.truncated = true;
  }
  return out;
}

}  // namespace stamo
