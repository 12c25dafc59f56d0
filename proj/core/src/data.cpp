#include "relkit/data.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relkit/errors.hpp"

namespace relkit::corpus {

using nlohmann::json;

Locale parse_locale(const std::string& s) {
  if (s == "us") return Locale::us;
  if (s == "es") return Locale::es;
  if (s == "jp") return Locale::jp;
  throw DataError("unknown product_locale value '" + s + "'");
}

std::string to_string(Locale l) {
  switch (l) {
    case Locale::us: return "us";
    case Locale::es: return "es";
    case Locale::jp: return "jp";
  }
  throw UsageError("bad locale enum");
}

EsciLabel parse_esci(const std::string& s) {
  if (s == "Exact") return EsciLabel::Exact;
  if (s == "Substitute") return EsciLabel::Substitute;
  if (s == "Complement") return EsciLabel::Complement;
  if (s == "Irrelevant") return EsciLabel::Irrelevant;
  throw DataError("unknown esci_label value '" + s + "'");
}

std::string to_string(EsciLabel e) {
  switch (e) {
    case EsciLabel::Exact: return "Exact";
    case EsciLabel::Substitute: return "Substitute";
    case EsciLabel::Complement: return "Complement";
    case EsciLabel::Irrelevant: return "Irrelevant";
  }
  throw UsageError("bad esci enum");
}

int32_t esci_index(EsciLabel e) { return static_cast<int32_t>(e); }

EsciLabel esci_from_index(int32_t i) {
  if (i < 0 || i > 3) throw IndexError("esci index out of range");
  return static_cast<EsciLabel>(i);
}

namespace {

std::string get_string(const json& j, const char* key, bool required,
                       size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required)
      throw DataError("line " + std::to_string(line) +
                      ": missing required field '" + key + "'");
    return "";
  }
  if (!it->is_string())
    throw DataError("line " + std::to_string(line) + ": field '" + key +
                    "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> split_bullets(const std::string& joined) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(joined);
  while (std::getline(in, cur))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join_bullets(const std::vector<std::string>& bullets) {
  std::string out;
  for (size_t i = 0; i < bullets.size(); ++i) {
    if (i) out += '\n';
    out += bullets[i];
  }
  return out;
}

json parse_line(const std::string& line, size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw DataError("line " + std::to_string(lineno) +
                    ": not a JSON object");
  return j;
}

template <typename Fn>
void for_each_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    fn(line, lineno);
  }
}

}  // namespace

std::vector<Example> load_labeled(const std::string& path) {
  std::vector<Example> out;
  for_each_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_line(line, lineno);
    Example e;
    e.example_id = get_string(j, "example_id", true, lineno);
    e.query = get_string(j, "query", true, lineno);
    if (e.query.empty())
      throw DataError("line " + std::to_string(lineno) + ": empty query");
    e.product_id = get_string(j, "product_id", true, lineno);
    e.title = get_string(j, "product_title", false, lineno);
    e.description = get_string(j, "product_description", false, lineno);
    e.bullet_points =
        split_bullets(get_string(j, "product_bullet_point", false, lineno));
    e.brand = get_string(j, "product_brand", false, lineno);
    e.color = get_string(j, "product_color_name", false, lineno);
    try {
      e.locale = parse_locale(get_string(j, "product_locale", true, lineno));
      if (j.contains("esci_label") && !j["esci_label"].is_null())
        e.esci_label = parse_esci(get_string(j, "esci_label", false, lineno));
    } catch (const DataError& err) {
      throw DataError("line " + std::to_string(lineno) + ": " + err.what());
    }
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<ProductRecord> load_catalogue(const std::string& path) {
  std::vector<ProductRecord> out;
  for_each_line(path, [&](const std::string& line, size_t lineno) {
    json j = parse_line(line, lineno);
    ProductRecord p;
    p.product_id = get_string(j, "product_id", true, lineno);
    p.title = get_string(j, "product_title", false, lineno);
    p.description = get_string(j, "product_description", false, lineno);
    p.bullet_points =
        split_bullets(get_string(j, "product_bullet_point", false, lineno));
    p.brand = get_string(j, "product_brand", false, lineno);
    p.color = get_string(j, "product_color_name", false, lineno);
    try {
      p.locale = parse_locale(get_string(j, "product_locale", true, lineno));
    } catch (const DataError& err) {
      throw DataError("line " + std::to_string(lineno) + ": " + err.what());
    }
    if (p.title.empty() && p.description.empty() && p.bullet_points.empty())
      throw DataError("line " + std::to_string(lineno) +
                      ": product has no text fields");
    out.push_back(std::move(p));
  });
  return out;
}

void write_labeled(const std::string& path, const std::vector<Example>& xs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  for (const Example& e : xs) {
    json j;
    j["example_id"] = e.example_id;
    j["query"] = e.query;
    j["product_id"] = e.product_id;
    j["product_title"] = e.title;
    j["product_description"] = e.description;
    j["product_bullet_point"] = join_bullets(e.bullet_points);
    j["product_brand"] = e.brand;
    j["product_color_name"] = e.color;
    j["product_locale"] = to_string(e.locale);
    if (e.esci_label) j["esci_label"] = to_string(*e.esci_label);
    out << j.dump() << '\n';
  }
}

void write_catalogue(const std::string& path,
                     const std::vector<ProductRecord>& ps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  for (const ProductRecord& p : ps) {
    json j;
    j["product_id"] = p.product_id;
    j["product_title"] = p.title;
    j["product_description"] = p.description;
    j["product_bullet_point"] = join_bullets(p.bullet_points);
    j["product_brand"] = p.brand;
    j["product_color_name"] = p.color;
    j["product_locale"] = to_string(p.locale);
    out << j.dump() << '\n';
  }
}

std::string product_text(const ProductRecord& p) {
  std::string t = p.title;
  for (const auto& b : p.bullet_points) {
    if (!t.empty()) t += ' ';
    t += b;
  }
  if (!p.description.empty()) {
    if (!t.empty()) t += ' ';
    t += p.description;
  }
  return t;
}

std::string product_text(const Example& e) {
  ProductRecord p;
  p.title = e.title;
  p.description = e.description;
  p.bullet_points = e.bullet_points;
  return product_text(p);
}

}  // namespace relkit::corpus
