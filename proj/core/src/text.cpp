#include "relkit/text.hpp"

namespace relkit::corpus {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' ||
         c == U'\v';
}

bool is_cjk(char32_t c) {
  return (c >= 0x3040 && c <= 0x30FF) ||   // hiragana + katakana
         (c >= 0x31F0 && c <= 0x31FF) ||   // katakana extensions
         (c >= 0x3400 && c <= 0x4DBF) ||   // CJK ext A
         (c >= 0x4E00 && c <= 0x9FFF) ||   // CJK unified
         (c >= 0xF900 && c <= 0xFAFF) ||   // compatibility ideographs
         (c >= 0xFF66 && c <= 0xFF9D);     // halfwidth katakana
}

bool is_word_char(char32_t c) {
  if (c < 0x80)
    return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') ||
           (c >= U'A' && c <= U'Z');
  if (is_space(c)) return false;
  // General punctuation, CJK punctuation, fullwidth leftovers.
  if (c >= 0x2000 && c <= 0x206F) return false;
  if (c >= 0x3000 && c <= 0x303F) return false;
  if (c >= 0xFF00 && c <= 0xFF0F) return false;
  if (c >= 0xFF1A && c <= 0xFF20) return false;
  if (c >= 0xFF3B && c <= 0xFF40) return false;
  if (c >= 0xFF5B && c <= 0xFF65) return false;
  return true;
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    }
    int extra;
    char32_t cp;
    if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      cp = b0 & 0x07;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (i + static_cast<size_t>(extra) >= s.size()) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      unsigned char b = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<size_t>(extra) + 1;
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
  std::string out;
  for (char32_t c : cps) out += encode_utf8(c);
  return out;
}

char32_t fold_char(char32_t c) {
  // Fullwidth ASCII block -> ASCII.
  if (c >= 0xFF01 && c <= 0xFF5E) c -= 0xFEE0;
  switch (c) {
    case 0x3000:  // ideographic space
    case 0x00A0:  // no-break space
      return U' ';
    case 0x2018:
    case 0x2019:
      return U'\'';
    case 0x201C:
    case 0x201D:
      return U'"';
    case 0x2010:
    case 0x2011:
    case 0x2012:
    case 0x2013:
    case 0x2014:
      return U'-';
    default:
      break;
  }
  if (c >= U'A' && c <= U'Z') return c + 32;
  // Latin-1 uppercase range, skipping the multiplication sign.
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  return c;
}

std::string normalize(std::string_view s) {
  std::vector<char32_t> cps = decode_utf8(s);
  std::string out;
  bool pending_space = false;
  bool emitted = false;
  for (char32_t raw : cps) {
    char32_t c = fold_char(raw);
    if (is_space(c)) {
      pending_space = emitted;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out += encode_utf8(c);
    emitted = true;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<char32_t> cps = decode_utf8(s);
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (char32_t raw : cps) {
    char32_t c = fold_char(raw);
    if (is_cjk(c)) {
      flush();
      words.push_back(encode_utf8(c));
      continue;
    }
    if (!is_word_char(c)) {
      flush();
      continue;
    }
    cur += encode_utf8(c);
  }
  flush();
  return words;
}

std::vector<std::string> char_trigrams(std::string_view s) {
  std::string norm = normalize(s);
  if (norm.empty()) return {};
  std::vector<char32_t> cps = decode_utf8(norm);
  std::vector<char32_t> padded;
  padded.reserve(cps.size() + 2);
  padded.push_back(U'#');
  padded.insert(padded.end(), cps.begin(), cps.end());
  padded.push_back(U'#');
  std::vector<std::string> grams;
  if (padded.size() < 3) return grams;
  for (size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::string g;
    g += encode_utf8(padded[i]);
    g += encode_utf8(padded[i + 1]);
    g += encode_utf8(padded[i + 2]);
    grams.push_back(std::move(g));
  }
  return grams;
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace relkit::corpus
