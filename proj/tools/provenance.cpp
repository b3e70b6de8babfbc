// provenance: compiler provenance recovery for stripped ARM binaries.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "provenance/commands.hpp"

namespace cli = provenance::cli;

namespace {

void add_common(CLI::App* app, cli::CommonOptions& o) {
  app->add_option("--isa", o.isa, "arm32, aarch64 or auto (from the ELF header)")->capture_default_str();
  app->add_option("-j,--jobs", o.jobs, "files processed in parallel")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_flag("--json", o.json, "machine-readable JSON on stdout");
  app->add_option("-o,--out", o.out, "write the result to this file instead of stdout");
  app->add_option("--objdump", o.objdump, "disassembler executable (default: $PROVENANCE_OBJDUMP or objdump)");
  app->add_flag("!--no-timing", o.timing, "omit timing fields so reports are reproducible byte for byte");
}

void add_corpus(CLI::App* app, cli::CorpusOptions& c) {
  app->add_option("-m,--manifest", c.manifest, "corpus manifest (CSV or JSON)");
  app->add_option("--features", c.features, "labeled feature records from `extract --json --manifest`");
  app->add_option("--max-size", c.max_size, "drop binaries larger than this many bytes")->capture_default_str();
  app->add_flag("--dedup-features", c.dedup_features, "also drop entries whose features duplicate an earlier entry");
}

void add_training(CLI::App* app, cli::TrainingOptions& t) {
  app->add_option("-C,--C", t.C, "inverse regularization strength")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--tol", t.tolerance, "relative objective decrease that stops training")->capture_default_str();
  app->add_option("--max-epochs", t.max_epochs, "coordinate-descent epoch limit")->capture_default_str();
  app->add_option("--class-weight", t.weighting, "balanced or uniform")->capture_default_str();
  app->add_option("--seed", t.seed, "seed for fold assignment and coordinate order")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recover compiler family, version and optimization level of stripped ARM binaries"};
  app.require_subcommand(1);
  cli::CommonOptions common;

  cli::ExtractOptions extract;
  auto* ex = app.add_subcommand("extract", "register profiles and opcode frequencies per binary");
  ex->add_option("paths", extract.paths, "ELF files or .s/.txt listings");
  ex->add_option("-m,--manifest", extract.manifest, "extract every binary of a manifest, keeping labels");
  add_common(ex, common);

  cli::CrossValidateOptions cv;
  auto* cvc = app.add_subcommand("cross-validate", "stratified k-fold accuracy of one task");
  add_corpus(cvc, cv.corpus);
  add_training(cvc, cv.training);
  cvc->add_option("--task", cv.task, "family, version, optimization or binary")->capture_default_str();
  cvc->add_option("--scheme", cv.scheme, "optimization label space: 5, 4 or 2")->capture_default_str();
  cvc->add_option("-k,--k", cv.k, "number of folds")->capture_default_str();
  cvc->add_option("--family", cv.family, "version task: only this family");
  cvc->add_option("--positive", cv.positive, "binary task: family label of the positive class")->capture_default_str();
  add_common(cvc, common);

  cli::TrainOptions train;
  auto* tr = app.add_subcommand("train", "train the classifier hierarchy and save the model");
  add_corpus(tr, train.corpus);
  add_training(tr, train.training);
  tr->add_option("--scheme", train.scheme, "optimization label space: 5, 4 or 2")->capture_default_str();
  add_common(tr, common);

  cli::PredictOptions predict;
  auto* pr = app.add_subcommand("predict", "predict family, version and optimization");
  pr->add_option("--model", predict.model, "model file")->required();
  pr->add_option("paths", predict.paths, "ELF files or listings");
  add_common(pr, common);

  cli::ExplainOptions explain;
  auto* exp = app.add_subcommand("explain", "largest-magnitude weights of each classifier");
  exp->add_option("--model", explain.model, "model file")->required();
  exp->add_option("--task", explain.task, "family, gcc_version, clang_version, optimization or all")->capture_default_str();
  exp->add_option("--top", explain.top, "rows per table")->capture_default_str();
  add_common(exp, common);

  cli::ScanOptions scan;
  auto* sc = app.add_subcommand("scan", "label distribution over a directory of unlabeled binaries");
  sc->add_option("--model", scan.model, "model file")->required();
  sc->add_option("directory", scan.directory, "directory to scan recursively")->required();
  sc->add_option("--report", scan.report, "also write the histogram to a .csv or .json file");
  sc->add_flag("--per-file", scan.per_file, "include per-file predictions in the JSON report");
  add_common(sc, common);

  cli::SummarizeOptions summary;
  auto* su = app.add_subcommand("summarize", "label counts and size histogram of a filtered manifest");
  su->add_option("-m,--manifest", summary.manifest, "corpus manifest")->required();
  su->add_option("--max-size", summary.max_size, "size filter in bytes")->capture_default_str();
  su->add_flag("--csv", summary.csv, "size histogram as CSV instead of the JSON summary");
  add_common(su, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitUser;
  }

  try {
    if (*ex) return cli::cmd_extract(extract, common, std::cout, std::cerr);
    if (*cvc) return cli::cmd_cross_validate(cv, common, std::cout, std::cerr);
    if (*tr) return cli::cmd_train(train, common, std::cout, std::cerr);
    if (*pr) return cli::cmd_predict(predict, common, std::cout, std::cerr);
    if (*exp) return cli::cmd_explain(explain, common, std::cout, std::cerr);
    if (*sc) return cli::cmd_scan(scan, common, std::cout, std::cerr);
    if (*su) return cli::cmd_summarize(summary, common, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kExitInternal;
}
