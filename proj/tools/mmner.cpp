// mmner: train, cache, annotate and evaluate from one flat JSON config.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmner/commands.hpp"
#include "mmner/synthetic.hpp"

namespace {

mmner::PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  auto cfg = path.empty() ? mmner::PipelineConfig{} : mmner::PipelineConfig::load(path);
  for (const auto& o : overrides) cfg.set_override(o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal named entity recognition for microblog text"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "flat JSON config; relative paths resolve against its directory");
  app.add_option("-s,--set", overrides, "override a config key, key=value (repeatable)");

  auto* tv = app.add_subcommand("train-vision", "build the visual vocabulary and the 12 object models");
  auto* tt = app.add_subcommand("train-text", "train the snippet categorizer from knowledge-base abstracts");

  auto* tr = app.add_subcommand("train-tree", "train the fusion tree on a gold CoNLL corpus");
  std::string tree_gold;
  tr->add_option("gold", tree_gold, "gold CoNLL file")->required();

  auto* an = app.add_subcommand("annotate", "annotate one sentence per line");
  std::string a_in, a_out, a_ind;
  an->add_option("input", a_in, "sentence file")->required();
  an->add_option("output", a_out, "annotation file")->required();
  an->add_option("--indicators", a_ind, "write candidate indicator vectors as TSV");

  auto* ev = app.add_subcommand("evaluate", "cross-validate against a gold CoNLL corpus");
  std::string e_gold, e_tsv, e_pred;
  ev->add_option("gold", e_gold, "gold CoNLL file")->required();
  ev->add_option("--report", e_tsv, "write the report as TSV");
  ev->add_option("--predictions", e_pred, "write CoNLL with a predicted column");

  auto* ca = app.add_subcommand("cache", "manage the evidence cache");
  ca->require_subcommand(1);
  auto* cw = ca->add_subcommand("warm", "prefetch evidence for all candidates in a sentence file");
  std::string w_in;
  cw->add_option("input", w_in, "sentence file")->required();
  auto* cs = ca->add_subcommand("stats", "print entry count and bytes");
  auto* cc = ca->add_subcommand("clear", "remove all entries");

  auto* mf = app.add_subcommand("make-fixtures", "write a synthetic offline fixture world");
  std::string f_dir;
  mmner::synthetic::FixtureOptions fopt;
  mf->add_option("dir", f_dir, "output directory")->required();
  mf->add_option("--images-per-class", fopt.images_per_class, "training images per object class");
  mf->add_option("--docs-per-class", fopt.docs_per_class, "abstracts per class in the dump");
  mf->add_option("--seed", fopt.seed, "generator seed");
  mf->add_option("-k", fopt.k, "vocabulary size written to the fixture config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mf->parsed()) {
      auto p = mmner::synthetic::write_fixture_world(f_dir, fopt);
      std::cout << "fixtures written; config " << p.config().string() << "\n";
      return 0;
    }
    auto cfg = load_config(config_path, overrides);
    if (tv->parsed()) {
      mmner::cmd_train_vision(cfg, std::cout);
    } else if (tt->parsed()) {
      mmner::cmd_train_text(cfg, std::cout);
    } else if (tr->parsed()) {
      mmner::cmd_train_tree(cfg, tree_gold, std::cout);
    } else if (an->parsed()) {
      mmner::cmd_annotate(cfg, {a_in, a_out, a_ind}, std::cout);
    } else if (ev->parsed()) {
      mmner::cmd_evaluate(cfg, {e_gold, e_tsv, e_pred}, std::cout);
    } else if (cw->parsed()) {
      mmner::cmd_cache_warm(cfg, w_in, std::cout);
    } else if (cs->parsed()) {
      mmner::cmd_cache_stats(cfg, std::cout);
    } else if (cc->parsed()) {
      mmner::cmd_cache_clear(cfg, std::cout);
    }
  } catch (const mmner::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
