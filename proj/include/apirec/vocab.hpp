#pragma once

#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "apirec/corpus.hpp"

// Token space: a base subword tokenizer extended with one indivisible token
// per repository API plus the four task delimiters framing the output
// sections. Immutable after construction; encode/decode are pure.

namespace apirec {

class BaseTokenizer {
 public:
  virtual ~BaseTokenizer() = default;
  virtual int vocab_size() const = 0;
  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  virtual std::vector<int> encode(std::string_view text) const = 0;
  virtual std::string decode_token(int id) const = 0;
};

// Bundled base tokenizer: byte-level with begin/end markers. Ids 0..255 are
// raw bytes, 256 is <|bos|>, 257 is <|eos|>.
class ByteTokenizer final : public BaseTokenizer {
 public:
  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  int vocab_size() const override { return 258; }
  int bos_id() const override { return kBos; }
  int eos_id() const override { return kEos; }
  std::vector<int> encode(std::string_view text) const override;
  std::string decode_token(int id) const override;
};

enum class Delimiter { ApiStart = 0, ApiStop = 1, ReasonStart = 2, ReasonStop = 3 };

struct TokenSpace {
  int base_vocab_size = 0;
  int bos_id = -1;
  int eos_id = -1;
  int delimiter_ids[4] = {-1, -1, -1, -1};         // API_start, API_stop, REASON_start, REASON_stop
  std::vector<std::string> api_ids;                // token-id order
  std::unordered_map<std::string, int> api_token;  // api_id -> token id

  int total_size() const { return base_vocab_size + 4 + static_cast<int>(api_ids.size()); }
  int delimiter(Delimiter d) const { return delimiter_ids[static_cast<int>(d)]; }
  bool is_api_token(int id) const {
    return id >= base_vocab_size + 4 && id < total_size();
  }
  bool is_delimiter(int id) const { return id >= base_vocab_size && id < base_vocab_size + 4; }
  const std::string& api_of(int id) const;   // throws unless is_api_token(id)
  int token_of(const std::string& api_id) const;  // throws on unknown api
  std::string surface(int id) const;         // "<API_x>" / "<API_start>" / ... for extended ids

  // Stable content digest; checkpoints refuse to load against a different one.
  std::string digest() const;

  std::string to_json() const;
  static TokenSpace from_json(const std::string& text, const BaseTokenizer& base);
};

inline const char* delimiter_surface(Delimiter d) {
  switch (d) {
    case Delimiter::ApiStart: return "<API_start>";
    case Delimiter::ApiStop: return "<API_stop>";
    case Delimiter::ReasonStart: return "<REASON_start>";
    case Delimiter::ReasonStop: return "<REASON_stop>";
  }
  return "";
}

// Builds the extended space over a base tokenizer. Throws DataError when an
// api_id's surface form collides with a reserved token.
TokenSpace extend_vocabulary(const BaseTokenizer& base, const std::vector<WebApi>& apis);

// Encoder/decoder over the extended space. Extended surfaces (`<API_x>` and
// the four delimiters) always map to their single token id; everything else
// falls through to the base tokenizer.
class Codec {
 public:
  Codec(const BaseTokenizer& base, const TokenSpace& space);
  std::vector<int> encode(std::string_view text, bool add_bos = false, bool add_eos = false) const;
  std::string decode(std::span<const int> ids) const;
  const TokenSpace& space() const { return *space_; }
  const BaseTokenizer& base() const { return *base_; }

 private:
  const BaseTokenizer* base_;
  const TokenSpace* space_;
  std::unordered_map<std::string, int> surface_to_id_;
  size_t max_surface_len_ = 0;
};

struct MarkerRewrite {
  std::string text;
  std::vector<std::string> unknown_markers;  // names that resolved to no API
  size_t rewritten = 0;
};

// Replaces every ***name*** whose normalized name is a known api_id with
// <API_name>; unknown names stay verbatim and are reported.
MarkerRewrite rewrite_markers(std::string_view text, const TokenSpace& space);

// Distinct api_ids whose token occurs in ids[begin, end). Throws
// std::out_of_range on an invalid span.
std::set<std::string> api_tokens_in(std::span<const int> ids, const TokenSpace& space,
                                    size_t begin, size_t end);

}  // namespace apirec
