#pragma once

#include <optional>
#include <string>
#include <vector>

namespace relkit::corpus {

enum class Locale { us, es, jp };
enum class EsciLabel { Exact, Substitute, Complement, Irrelevant };

Locale parse_locale(const std::string& s);        // DataError on unknown
std::string to_string(Locale l);
EsciLabel parse_esci(const std::string& s);       // DataError on unknown
std::string to_string(EsciLabel e);
int32_t esci_index(EsciLabel e);                  // E=0, S=1, C=2, I=3
EsciLabel esci_from_index(int32_t i);

// One labeled query/product pair. Optional text fields are empty strings
// when absent; the label is optional outright (test files carry none).
struct Example {
  std::string example_id;
  std::string query;
  std::string product_id;
  std::string title;
  std::string description;
  std::vector<std::string> bullet_points;
  std::string brand;
  std::string color;
  Locale locale = Locale::us;
  std::optional<EsciLabel> esci_label;

  bool operator==(const Example&) const = default;
};

// Catalogue entry: a product with no query or label attached.
struct ProductRecord {
  std::string product_id;
  std::string title;
  std::string description;
  std::vector<std::string> bullet_points;
  std::string brand;
  std::string color;
  Locale locale = Locale::us;

  bool operator==(const ProductRecord&) const = default;
};

// JSON-lines ingestion. Field names follow the ESCI column names
// (product_title, product_bullet_point, ...); bullet points are one
// string split on newlines. Errors carry the 1-based line number.
std::vector<Example> load_labeled(const std::string& path);
std::vector<ProductRecord> load_catalogue(const std::string& path);

void write_labeled(const std::string& path, const std::vector<Example>& xs);
void write_catalogue(const std::string& path,
                     const std::vector<ProductRecord>& ps);

// Concatenated searchable text of a product: title, bullets, description.
std::string product_text(const ProductRecord& p);
std::string product_text(const Example& e);

}  // namespace relkit::corpus
