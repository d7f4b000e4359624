#include "apirec/vocab.hpp"

#include <algorithm>
#include <stdexcept>

#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

using nlohmann::json;

std::vector<int> ByteTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 7, "<|bos|>") == 0) {
      ids.push_back(kBos);
      i += 7;
    } else if (text.compare(i, 7, "<|eos|>") == 0) {
      ids.push_back(kEos);
      i += 7;
    } else {
      ids.push_back(static_cast<unsigned char>(text[i]));
      ++i;
    }
  }
  return ids;
}

std::string ByteTokenizer::decode_token(int id) const {
  if (id >= 0 && id < 256) return std::string(1, static_cast<char>(id));
  if (id == kBos) return "<|bos|>";
  if (id == kEos) return "<|eos|>";
  throw std::out_of_range("ByteTokenizer: id outside base vocabulary: " + std::to_string(id));
}

const std::string& TokenSpace::api_of(int id) const {
  if (!is_api_token(id)) throw std::out_of_range("not an api token id: " + std::to_string(id));
  return api_ids[static_cast<size_t>(id - base_vocab_size - 4)];
}

int TokenSpace::token_of(const std::string& api_id) const {
  auto it = api_token.find(api_id);
  if (it == api_token.end()) throw DataError("api has no token: " + api_id);
  return it->second;
}

std::string TokenSpace::surface(int id) const {
  if (is_delimiter(id)) return delimiter_surface(static_cast<Delimiter>(id - base_vocab_size));
  if (is_api_token(id)) return "<API_" + api_of(id) + ">";
  throw std::out_of_range("not an extended token id: " + std::to_string(id));
}

std::string TokenSpace::digest() const {
  std::string blob = "base:" + std::to_string(base_vocab_size) + ";bos:" + std::to_string(bos_id) +
                     ";eos:" + std::to_string(eos_id) + ";apis:";
  for (const auto& a : api_ids) {
    blob += a;
    blob += ',';
  }
  return util::sha256_hex(blob);
}

std::string TokenSpace::to_json() const {
  json j;
  j["base_vocab_size"] = base_vocab_size;
  j["bos_id"] = bos_id;
  j["eos_id"] = eos_id;
  j["delimiters"] = {{"API_start", delimiter_ids[0]},
                     {"API_stop", delimiter_ids[1]},
                     {"REASON_start", delimiter_ids[2]},
                     {"REASON_stop", delimiter_ids[3]}};
  json apis = json::object();
  for (const auto& [id, tok] : api_token) apis[id] = tok;
  j["api_tokens"] = apis;
  j["total_size"] = total_size();
  j["digest"] = digest();
  return j.dump(2) + "\n";
}

TokenSpace TokenSpace::from_json(const std::string& text, const BaseTokenizer& base) {
  json j = json::parse(text);
  TokenSpace space;
  space.base_vocab_size = j.at("base_vocab_size").get<int>();
  if (space.base_vocab_size != base.vocab_size())
    throw DataError("vocabulary file does not match the base tokenizer size");
  space.bos_id = j.at("bos_id").get<int>();
  space.eos_id = j.at("eos_id").get<int>();
  const auto& d = j.at("delimiters");
  space.delimiter_ids[0] = d.at("API_start").get<int>();
  space.delimiter_ids[1] = d.at("API_stop").get<int>();
  space.delimiter_ids[2] = d.at("REASON_start").get<int>();
  space.delimiter_ids[3] = d.at("REASON_stop").get<int>();
  std::vector<std::pair<int, std::string>> ordered;
  for (auto it = j.at("api_tokens").begin(); it != j.at("api_tokens").end(); ++it)
    ordered.emplace_back(it.value().get<int>(), it.key());
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [tok, id] : ordered) {
    if (tok != space.base_vocab_size + 4 + static_cast<int>(space.api_ids.size()))
      throw DataError("vocabulary file has non-contiguous api token ids");
    space.api_token[id] = tok;
    space.api_ids.push_back(id);
  }
  std::string recorded = j.value("digest", "");
  if (!recorded.empty() && recorded != space.digest())
    throw DataError("vocabulary file digest mismatch");
  return space;
}

TokenSpace extend_vocabulary(const BaseTokenizer& base, const std::vector<WebApi>& apis) {
  TokenSpace space;
  space.base_vocab_size = base.vocab_size();
  space.bos_id = base.bos_id();
  space.eos_id = base.eos_id();
  for (int i = 0; i < 4; ++i) space.delimiter_ids[i] = space.base_vocab_size + i;

  // Reserved names whose <API_x> surface would alias a delimiter.
  const std::set<std::string> reserved = {"start", "stop"};
  int next = space.base_vocab_size + 4;
  for (const auto& api : apis) {
    if (reserved.count(api.api_id))
      throw DataError("api_id collides with a reserved token surface: " + api.api_id);
    if (space.api_token.count(api.api_id))
      throw DataError("duplicate api_id in vocabulary extension: " + api.api_id);
    space.api_token[api.api_id] = next++;
    space.api_ids.push_back(api.api_id);
  }
  return space;
}

Codec::Codec(const BaseTokenizer& base, const TokenSpace& space) : base_(&base), space_(&space) {
  for (int i = 0; i < 4; ++i) {
    std::string s = delimiter_surface(static_cast<Delimiter>(i));
    surface_to_id_[s] = space.delimiter_ids[i];
    max_surface_len_ = std::max(max_surface_len_, s.size());
  }
  for (const auto& [api_id, tok] : space.api_token) {
    std::string s = "<API_" + api_id + ">";
    surface_to_id_[s] = tok;
    max_surface_len_ = std::max(max_surface_len_, s.size());
  }
}

std::vector<int> Codec::encode(std::string_view text, bool add_bos, bool add_eos) const {
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  if (add_bos) ids.push_back(space_->bos_id);
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      size_t close = text.find('>', i + 1);
      if (close != std::string_view::npos && close - i < max_surface_len_) {
        auto it = surface_to_id_.find(std::string(text.substr(i, close - i + 1)));
        if (it != surface_to_id_.end()) {
          ids.push_back(it->second);
          i = close + 1;
          continue;
        }
      }
    }
    // Longest extended surface is bounded, so base encoding one chunk at a
    // time stays linear: hand the base tokenizer the run up to the next '<'.
    size_t next = text.find('<', i + 1);
    if (next == std::string_view::npos) next = text.size();
    size_t stop = (text[i] == '<') ? i + 1 : next;
    auto chunk = base_->encode(text.substr(i, stop - i));
    ids.insert(ids.end(), chunk.begin(), chunk.end());
    i = stop;
  }
  if (add_eos) ids.push_back(space_->eos_id);
  return ids;
}

std::string Codec::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < space_->base_vocab_size)
      out += base_->decode_token(id);
    else
      out += space_->surface(id);
  }
  return out;
}

MarkerRewrite rewrite_markers(std::string_view text, const TokenSpace& space) {
  MarkerRewrite result;
  result.text.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 3, "***") == 0) {
      size_t close = text.find("***", i + 3);
      if (close != std::string_view::npos) {
        std::string raw(text.substr(i + 3, close - i - 3));
        std::string name = util::normalize_name(raw);
        if (!name.empty() && space.api_token.count(name)) {
          result.text += "<API_" + name + ">";
          ++result.rewritten;
        } else {
          result.text += text.substr(i, close + 3 - i);
          result.unknown_markers.push_back(raw);
        }
        i = close + 3;
        continue;
      }
    }
    result.text += text[i++];
  }
  return result;
}

std::set<std::string> api_tokens_in(std::span<const int> ids, const TokenSpace& space,
                                    size_t begin, size_t end) {
  if (begin > end || end > ids.size())
    throw std::out_of_range("api_tokens_in: span [" + std::to_string(begin) + ", " +
                            std::to_string(end) + ") out of range for length " +
                            std::to_string(ids.size()));
  std::set<std::string> out;
  for (size_t i = begin; i < end; ++i)
    if (space.is_api_token(ids[i])) out.insert(space.api_of(ids[i]));
  return out;
}

}  // namespace apirec
