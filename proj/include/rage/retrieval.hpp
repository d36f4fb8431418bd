#pragma once

// BM25 inverted index over a JSONL corpus.

#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rage/core.hpp"

namespace rage::retrieval {

struct CorpusRecord {
  std::string id;
  std::string contents;
};

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
  int top_k = 10;

  void Validate() const;
};

// Lowercase alphanumeric word splitting over Unicode code points. No stemming,
// no stopwords.
std::vector<std::string> Tokenize(std::string_view text);

// Reads {"id", "contents"} objects, one per line. Blank lines are skipped.
// Malformed lines raise kParseError with the 1-based line number in details.
std::vector<CorpusRecord> ReadCorpusJsonl(std::istream& in);

class Index {
 public:
  struct Posting {
    int doc = 0;
    int tf = 0;
  };
  struct Document {
    std::string id;
    std::string contents;
    int length = 0;
  };

  // Throws kEmptyCorpus / kDuplicateId / kInvalidArgument (empty contents).
  static Index Build(std::span<const CorpusRecord> corpus);

  // The on-disk format is a magic line followed by a JSON body.
  void Save(const std::string& path) const;
  static Index Load(const std::string& path);

  int num_documents() const { return static_cast<int>(docs_.size()); }
  double avg_doc_len() const { return avg_doc_len_; }
  const std::vector<Document>& documents() const { return docs_; }
  int document_frequency(const std::string& term) const;
  const std::vector<Posting>* postings(const std::string& term) const;

  double Idf(const std::string& term) const;
  // BM25 score of every document for the given distinct query terms.
  std::vector<double> ScoreAll(std::span<const std::string> terms,
                               const Bm25Params& params) const;

 private:
  std::vector<Document> docs_;
  std::map<std::string, std::vector<Posting>> postings_;
  double avg_doc_len_ = 0.0;
};

// Ranked sources, descending score, ties by ascending doc_id. Documents
// scoring zero are dropped, so the list may be empty. Throws kEmptyQuery when
// the query has no tokens.
std::vector<SourceDocument> Retrieve(const Index& index, const Query& query,
                                     const Bm25Params& params);

// Same as Retrieve, but throws kNoResults instead of returning an empty list.
ContextSequence RetrieveContext(const Index& index, const Query& query,
                                const Bm25Params& params);

// Retrieval scores normalized to sum to one over the context.
RelevanceVector RelativeRelevance(const ContextSequence& ctx);

}  // namespace rage::retrieval
