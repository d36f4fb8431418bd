#include "rage/retrieval.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace rage::retrieval {

using nlohmann::json;

namespace {

constexpr std::string_view kIndexMagic = "RAGE-BM25-INDEX";
constexpr int kIndexVersion = 1;

}  // namespace

void Bm25Params::Validate() const {
  if (!(k1 > 0.0) || !std::isfinite(k1)) {
    throw Error(ErrorCode::kInvalidArgument, "k1 must be positive");
  }
  if (!(b >= 0.0 && b <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "b must lie in [0, 1]");
  }
  if (top_k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "top_k must be positive");
  }
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const int32_t length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c >= 0 && u_isalnum(c)) {
      char buf[U8_MAX_LENGTH];
      int32_t n = 0;
      U8_APPEND_UNSAFE(buf, n, u_tolower(c));
      current.append(buf, n);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<CorpusRecord> ReadCorpusJsonl(std::istream& in) {
  std::vector<CorpusRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      records.push_back({j.at("id").get<std::string>(), j.at("contents").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": " + e.what(),
                  {{"line", line_no}});
    }
  }
  return records;
}

Index Index::Build(std::span<const CorpusRecord> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus is empty");
  Index index;
  std::unordered_set<std::string> ids;
  long long total_len = 0;
  for (const auto& record : corpus) {
    if (!ids.insert(record.id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate document id: " + record.id,
                  {{"id", record.id}});
    }
    if (record.contents.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "document contents are empty",
                  {{"id", record.id}});
    }
    const int doc = static_cast<int>(index.docs_.size());
    const auto tokens = Tokenize(record.contents);
    std::map<std::string, int> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) index.postings_[term].push_back({doc, count});
    index.docs_.push_back({record.id, record.contents, static_cast<int>(tokens.size())});
    total_len += static_cast<long long>(tokens.size());
  }
  index.avg_doc_len_ = static_cast<double>(total_len) / static_cast<double>(index.docs_.size());
  return index;
}

int Index::document_frequency(const std::string& term) const {
  const auto* p = postings(term);
  return p ? static_cast<int>(p->size()) : 0;
}

const std::vector<Index::Posting>* Index::postings(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? nullptr : &it->second;
}

double Index::Idf(const std::string& term) const {
  const double n = num_documents();
  const double df = document_frequency(term);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> Index::ScoreAll(std::span<const std::string> terms,
                                    const Bm25Params& params) const {
  std::vector<double> scores(docs_.size(), 0.0);
  // A zero-length corpus average only happens when no document has a token;
  // then no term can match either.
  const double avg = avg_doc_len_ > 0.0 ? avg_doc_len_ : 1.0;
  for (const auto& term : terms) {
    const auto* list = postings(term);
    if (!list) continue;
    const double idf = Idf(term);
    for (const auto& [doc, tf] : *list) {
      const double len_norm =
          params.k1 * (1.0 - params.b + params.b * docs_[doc].length / avg);
      scores[doc] += idf * tf * (params.k1 + 1.0) / (tf + len_norm);
    }
  }
  return scores;
}

void Index::Save(const std::string& path) const {
  json body;
  body["version"] = kIndexVersion;
  body["avg_doc_len"] = avg_doc_len_;
  json docs = json::array();
  for (const auto& d : docs_) {
    docs.push_back({{"id", d.id}, {"contents", d.contents}, {"length", d.length}});
  }
  body["documents"] = std::move(docs);
  json postings = json::object();
  for (const auto& [term, list] : postings_) {
    json arr = json::array();
    for (const auto& p : list) arr.push_back({p.doc, p.tf});
    postings[term] = std::move(arr);
  }
  body["postings"] = std::move(postings);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write index: " + path);
  out << kIndexMagic << ' ' << kIndexVersion << '\n' << body.dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "failed writing index: " + path);
}

Index Index::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read index: " + path);
  std::string header;
  std::getline(in, header);
  const std::string expected = std::string(kIndexMagic) + ' ' + std::to_string(kIndexVersion);
  if (header != expected) {
    throw Error(ErrorCode::kParseError, "not an index file (bad magic header): " + path,
                {{"header", header}});
  }
  Index index;
  try {
    const json body = json::parse(in);
    for (const auto& d : body.at("documents")) {
      index.docs_.push_back({d.at("id").get<std::string>(), d.at("contents").get<std::string>(),
                             d.at("length").get<int>()});
    }
    for (const auto& [term, arr] : body.at("postings").items()) {
      auto& list = index.postings_[term];
      for (const auto& p : arr) list.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    }
    index.avg_doc_len_ = body.at("avg_doc_len").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("corrupt index: ") + e.what());
  }
  return index;
}

std::vector<SourceDocument> Retrieve(const Index& index, const Query& query,
                                     const Bm25Params& params) {
  params.Validate();
  auto tokens = Tokenize(query.text);
  if (tokens.empty()) throw Error(ErrorCode::kEmptyQuery, "query has no searchable terms");
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());

  const auto scores = index.ScoreAll(tokens, params);
  std::vector<int> hits;
  for (int d = 0; d < static_cast<int>(scores.size()); ++d) {
    if (scores[d] > 0.0) hits.push_back(d);
  }
  const auto& docs = index.documents();
  auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return docs[a].id < docs[b].id;
  };
  const std::size_t keep = std::min<std::size_t>(hits.size(), params.top_k);
  std::partial_sort(hits.begin(), hits.begin() + keep, hits.end(), better);
  hits.resize(keep);

  std::vector<SourceDocument> out;
  out.reserve(keep);
  for (int d : hits) out.push_back({docs[d].id, docs[d].contents, scores[d]});
  return out;
}

ContextSequence RetrieveContext(const Index& index, const Query& query,
                                const Bm25Params& params) {
  auto sources = Retrieve(index, query, params);
  if (sources.empty()) {
    throw Error(ErrorCode::kNoResults, "no document matches the query",
                {{"query", query.text}});
  }
  return ContextSequence(query, std::move(sources));
}

RelevanceVector RelativeRelevance(const ContextSequence& ctx) {
  double total = 0.0;
  for (const auto& d : ctx.sources()) {
    if (!(d.retrieval_score >= 0.0) || !std::isfinite(d.retrieval_score)) {
      throw Error(ErrorCode::kInvalidArgument, "retrieval score must be non-negative",
                  {{"doc_id", d.doc_id}});
    }
    total += d.retrieval_score;
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::kAllZeroScores, "all retrieval scores are zero");
  }
  RelevanceVector rv;
  rv.method = ScoringMethod::kRetrievalScore;
  rv.normalized = true;
  for (const auto& d : ctx.sources()) rv.scores[d.doc_id] = d.retrieval_score / total;
  return rv;
}

}  // namespace rage::retrieval
