#include "relkit/synthetic.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

#include "relkit/errors.hpp"
#include "relkit/rng.hpp"

namespace relkit::corpus {

namespace {

// Category and color words all carry a consonant cluster or coda, while
// brand names below are strict consonant-vowel chains, so the three
// vocabularies can never collide.
constexpr std::array<const char*, 16> kCategories = {
    "lamp",  "desk",  "chair", "shelf", "clock", "bench", "crate", "stand",
    "mount", "frame", "rack",  "cart",  "board", "stool", "tray",  "hook"};

constexpr std::array<const char*, 12> kColors = {
    "red",   "blue", "green", "black", "white", "silver",
    "amber", "teal", "ivory", "plum",  "gray",  "coral"};

constexpr std::array<const char*, 10> kFillers = {
    "sturdy",  "compact", "foldable", "portable", "durable",
    "classic", "modern",  "slim",     "quiet",    "bright"};

// Pronounceable brand name: a fixed-length consonant-vowel chain keyed
// by the brand index.
std::string brand_name(int64_t i) {
  static const char* onset[] = {"b", "d", "f", "g", "k", "l", "m", "n",
                                "p", "r", "s", "t", "v", "z", "j", "w"};
  static const char* vowel[] = {"a", "e", "i", "o", "u"};
  uint64_t x = static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ULL + 0x1234567ULL;
  std::string w;
  for (int s = 0; s < 3; ++s) {
    x = x * 6364136223846793005ULL + 1442695040888963407ULL;
    w += onset[(x >> 33) % 16];
    w += vowel[(x >> 13) % 5];
  }
  return w;
}

std::string model_token(int64_t i) { return "m" + std::to_string(100 + i); }

int64_t category_of(int64_t product, const SynthConfig& cfg) {
  return product % cfg.n_categories;
}

ProductRecord make_product(int64_t i, const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "prod", static_cast<uint64_t>(i)));
  int64_t c = category_of(i, cfg);
  std::string cat = kCategories[static_cast<size_t>(c)];
  std::string partner =
      kCategories[static_cast<size_t>((c + 1) % cfg.n_categories)];
  std::string brand =
      brand_name(static_cast<int64_t>(rng.uniform_int(
          static_cast<uint64_t>(cfg.n_brands))));
  std::string color =
      kColors[rng.uniform_int(static_cast<uint64_t>(cfg.n_colors))];
  std::string f1 = kFillers[rng.uniform_int(kFillers.size())];
  std::string f2 = kFillers[rng.uniform_int(kFillers.size())];

  ProductRecord p;
  p.product_id = "P" + std::to_string(1000 + i);
  p.title = brand + " " + cat + " " + model_token(i) + " " + color;
  p.bullet_points = {"fits any " + cat + " setup", "pairs with " + partner};
  p.description = f1 + " " + f2 + " " + brand + " " + color + " " + cat;
  p.brand = brand;
  p.color = color;
  p.locale = Locale::us;
  return p;
}

Example pair_example(const std::string& query, const ProductRecord& p,
                     EsciLabel label, const std::string& id) {
  Example e;
  e.example_id = id;
  e.query = query;
  e.product_id = p.product_id;
  e.title = p.title;
  e.description = p.description;
  e.bullet_points = p.bullet_points;
  e.brand = p.brand;
  e.color = p.color;
  e.locale = p.locale;
  e.esci_label = label;
  return e;
}

// Uniform product index of the given category, excluding `not_these`.
int64_t draw_in_category(Rng& rng, int64_t cat, const SynthConfig& cfg,
                         const std::vector<int64_t>& not_these) {
  for (;;) {
    int64_t slot = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(
        (cfg.n_products - 1 - cat) / cfg.n_categories + 1)));
    int64_t j = cat + slot * cfg.n_categories;
    if (std::find(not_these.begin(), not_these.end(), j) == not_these.end())
      return j;
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_categories < 3 ||
      n_categories > static_cast<int64_t>(kCategories.size()))
    throw ConfigError("synth: n_categories must lie in [3, " +
                      std::to_string(kCategories.size()) + "]");
  if (n_products < 3 * n_categories)
    throw ConfigError("synth: need at least three products per category");
  if (n_brands < 1) throw ConfigError("synth: n_brands must be positive");
  if (n_colors < 1 || n_colors > static_cast<int64_t>(kColors.size()))
    throw ConfigError("synth: n_colors must lie in [1, " +
                      std::to_string(kColors.size()) + "]");
  if (n_queries < 1 || n_queries > 2 * n_products)
    throw ConfigError(
        "synth: n_queries must lie in [1, 2 * n_products]; each product "
        "anchors at most two query phrasings");
  if (!(flip_fraction >= 0.0 && flip_fraction < 1.0))
    throw ConfigError("synth: flip_fraction must lie in [0, 1)");
}

std::vector<ProductRecord> make_catalogue(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<ProductRecord> out;
  out.reserve(static_cast<size_t>(cfg.n_products));
  for (int64_t i = 0; i < cfg.n_products; ++i)
    out.push_back(make_product(i, cfg));
  return out;
}

LabeledSet make_labeled(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<ProductRecord> products = make_catalogue(cfg);
  LabeledSet set;
  set.examples.reserve(static_cast<size_t>(cfg.n_queries) * 5);

  for (int64_t q = 0; q < cfg.n_queries; ++q) {
    Rng rng(derive_seed(cfg.seed, "query", static_cast<uint64_t>(q)));
    int64_t anchor = q % cfg.n_products;
    int64_t c = category_of(anchor, cfg);
    std::string cat = kCategories[static_cast<size_t>(c)];
    std::string model = model_token(anchor);
    // Second pass over the anchors swaps the word order, so the two
    // phrasings of one anchor are distinct sequences.
    std::string query =
        q < cfg.n_products ? cat + " " + model : model + " " + cat;

    auto add = [&](int64_t j, EsciLabel label, int64_t k) {
      set.examples.push_back(pair_example(
          query, products[static_cast<size_t>(j)], label,
          "q" + std::to_string(q) + "-" + std::to_string(k)));
    };

    add(anchor, EsciLabel::Exact, 0);
    int64_t s1 = draw_in_category(rng, c, cfg, {anchor});
    int64_t s2 = draw_in_category(rng, c, cfg, {anchor, s1});
    add(s1, EsciLabel::Substitute, 1);
    add(s2, EsciLabel::Substitute, 2);
    // A complement's own partner category is the query's category.
    int64_t comp_cat = (c + cfg.n_categories - 1) % cfg.n_categories;
    add(draw_in_category(rng, comp_cat, cfg, {}), EsciLabel::Complement, 3);
    int64_t irr_cat =
        (c + 1 + static_cast<int64_t>(rng.uniform_int(
                     static_cast<uint64_t>(cfg.n_categories - 2)))) %
        cfg.n_categories;
    add(draw_in_category(rng, irr_cat, cfg, {}), EsciLabel::Irrelevant, 4);
  }

  auto n = static_cast<int64_t>(set.examples.size());
  auto budget = static_cast<int64_t>(cfg.flip_fraction * static_cast<double>(n));
  if (budget > 0) {
    Rng rng(derive_seed(cfg.seed, "flip"));
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), int64_t{0});
    rng.shuffle(order);
    set.flipped.assign(order.begin(), order.begin() + budget);
    std::sort(set.flipped.begin(), set.flipped.end());
    for (int64_t i : set.flipped) {
      auto& e = set.examples[static_cast<size_t>(i)];
      int32_t old = esci_index(*e.esci_label);
      int32_t shift = 1 + static_cast<int32_t>(rng.uniform_int(3));
      e.esci_label = esci_from_index((old + shift) % 4);
    }
  }
  return set;
}

}  // namespace relkit::corpus
