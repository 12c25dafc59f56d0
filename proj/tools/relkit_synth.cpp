// Writes the rule-based synthetic corpus: a product catalogue, a labeled
// query/product file, and (when labels are flipped) the corrupted
// indices, so pipeline runs need no external data.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relkit/data.hpp"
#include "relkit/errors.hpp"
#include "relkit/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic corpus generator"};
  std::string out_dir = "data";
  relkit::corpus::SynthConfig cfg;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--products", cfg.n_products, "catalogue size");
  app.add_option("--categories", cfg.n_categories, "category count");
  app.add_option("--brands", cfg.n_brands, "brand count");
  app.add_option("--colors", cfg.n_colors, "color count");
  app.add_option("--queries", cfg.n_queries, "queries (5 examples each)");
  app.add_option("--flip", cfg.flip_fraction, "label corruption fraction");
  app.add_option("--seed", cfg.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    auto products = relkit::corpus::make_catalogue(cfg);
    relkit::corpus::write_catalogue(out_dir + "/catalogue.jsonl", products);
    auto labeled = relkit::corpus::make_labeled(cfg);
    relkit::corpus::write_labeled(out_dir + "/labeled.jsonl",
                                  labeled.examples);
    if (!labeled.flipped.empty()) {
      std::ofstream out(out_dir + "/flipped.json", std::ios::binary);
      out << nlohmann::json(labeled.flipped).dump() << "\n";
    }
    std::cout << out_dir << ": " << products.size() << " products, "
              << labeled.examples.size() << " labeled examples, "
              << labeled.flipped.size() << " flipped labels\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
