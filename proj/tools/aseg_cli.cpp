// Command-line front end over the aseg C API: synthesize data, train, score,
// segment single images, verify gradients, and compare two result reports.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "aseg.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(aseg_status status, const std::string& what) {
  if (status != ASEG_OK) {
    throw CliError(what + ": " + aseg_status_name(status) + " (" + aseg_last_error() + ")");
  }
}

bool parse_on_off(const std::string& value) { return value == "on"; }

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// Flat `key = value` lines, '#' comments. Keys are the long option names of
// the active subcommand; unknown keys are rejected by the parser itself.
std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw CliError("cannot read config file: " + path);
  std::vector<std::string> args;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CliError("config file " + path + " line " + std::to_string(line_no) +
                     ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw CliError("config file " + path + " line " + std::to_string(line_no) + ": empty key");
    }
    if (key == "config") {
      throw CliError("config file " + path + ": key 'config' cannot nest");
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// Resolved-option echo, written into the run's output directory.
using Echo = std::vector<std::pair<std::string, std::string>>;

void write_echo(const std::string& out_dir, const Echo& entries) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string path = (fs::path(out_dir) / "config.echo").string();
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw CliError("cannot write " + path);
  for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
}

std::string format_float(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

void print_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return;
  std::cout << in.rdbuf();
}

struct PhantomArgs {
  uint32_t count = 8;
  uint32_t size = 64;
  uint64_t seed = 1;
  double noise_level = 0.02;
  std::string out;
};

struct TrainArgs {
  std::string model = "pix2pix";
  std::string data, out;
  uint32_t epochs = 1;
  uint32_t batch_size = 1;
  double lambda = 100.0;
  uint32_t image_size = 64;
  uint32_t train_count = 0;
  uint64_t seed = 1;
  std::string shuffle = "on";
  double lr = 2e-4;
  uint32_t base_width = 16;
  uint32_t depth = 4;
  double dropout = 0.5;
  uint32_t disc_base_width = 16;
  uint32_t disc_layers = 3;
  uint64_t split_seed = 0;
  bool split_seed_given = false;
};

struct EvalArgs {
  std::string checkpoint, data, out;
  std::string split = "test";
  uint32_t train_count = 0;
  std::string noise = "off";
  uint64_t seed = 0;
  uint64_t split_seed = 0;
  bool split_seed_given = false;
  uint32_t sample_images = 8;
};

struct InferArgs {
  std::string checkpoint, image, out;
  std::string noise = "off";
  std::string raw = "off";
  uint64_t seed = 0;
};

struct CompareArgs {
  std::string report_a, report_b;
  std::string label_a = "A", label_b = "B";
  std::string train_time_a, train_time_b, test_time_a, test_time_b;
  std::string out;
};

int run_phantom(const PhantomArgs& args) {
  Echo echo{{"command", "phantom"},
            {"count", std::to_string(args.count)},
            {"size", std::to_string(args.size)},
            {"seed", std::to_string(args.seed)},
            {"noise-level", format_float(args.noise_level)},
            {"out", args.out}};
  write_echo(args.out, echo);
  aseg_phantom_options options;
  aseg_phantom_options_init(&options);
  options.count = args.count;
  options.image_size = args.size;
  options.seed = args.seed;
  options.noise_level = static_cast<float>(args.noise_level);
  check(aseg_generate_phantoms(args.out.c_str(), &options), "phantom generation failed");
  std::cout << "wrote " << args.count << " image/mask pairs under " << args.out << "\n";
  return kExitOk;
}

int run_train(const TrainArgs& args) {
  Echo echo{{"command", "train"},
            {"model", args.model},
            {"data", args.data},
            {"out", args.out},
            {"epochs", std::to_string(args.epochs)},
            {"batch-size", std::to_string(args.batch_size)},
            {"lambda", format_float(args.lambda)},
            {"image-size", std::to_string(args.image_size)},
            {"train-count", std::to_string(args.train_count)},
            {"seed", std::to_string(args.seed)},
            {"shuffle", args.shuffle},
            {"lr", format_float(args.lr)},
            {"base-width", std::to_string(args.base_width)},
            {"depth", std::to_string(args.depth)},
            {"dropout", format_float(args.dropout)},
            {"disc-base-width", std::to_string(args.disc_base_width)},
            {"disc-layers", std::to_string(args.disc_layers)},
            {"split-seed", args.split_seed_given ? std::to_string(args.split_seed) : "none"}};
  write_echo(args.out, echo);

  aseg_train_options options;
  aseg_train_options_init(&options);
  options.model = args.model == "pix2pix" ? ASEG_MODEL_PIX2PIX : ASEG_MODEL_UNET_BASELINE;
  options.data_dir = args.data.c_str();
  options.out_dir = args.out.c_str();
  options.epochs = args.epochs;
  options.batch_size = args.batch_size;
  options.lambda_l1 = static_cast<float>(args.lambda);
  options.image_size = args.image_size;
  options.train_count = args.train_count;
  options.seed = args.seed;
  options.shuffle = parse_on_off(args.shuffle) ? 1 : 0;
  options.seeded_split = args.split_seed_given ? 1 : 0;
  options.split_seed = args.split_seed;
  options.learning_rate = static_cast<float>(args.lr);
  options.base_width = args.base_width;
  options.depth = args.depth;
  options.dropout_p = static_cast<float>(args.dropout);
  options.disc_base_width = args.disc_base_width;
  options.disc_layers = args.disc_layers;
  check(aseg_train(&options), "training failed");
  std::cout << "training complete; checkpoint at " << (fs::path(args.out) / "final.aseg").string()
            << "\n";
  return kExitOk;
}

int run_eval(const EvalArgs& args) {
  Echo echo{{"command", "eval"},
            {"checkpoint", args.checkpoint},
            {"data", args.data},
            {"out", args.out},
            {"split", args.split},
            {"train-count", std::to_string(args.train_count)},
            {"noise", args.noise},
            {"seed", std::to_string(args.seed)},
            {"split-seed", args.split_seed_given ? std::to_string(args.split_seed) : "none"},
            {"sample-images", std::to_string(args.sample_images)}};
  write_echo(args.out, echo);

  aseg_checkpoint* checkpoint = nullptr;
  check(aseg_checkpoint_open(args.checkpoint.c_str(), &checkpoint), "cannot open checkpoint");
  aseg_eval_options options;
  aseg_eval_options_init(&options);
  options.data_dir = args.data.c_str();
  options.out_dir = args.out.c_str();
  options.split = args.split.c_str();
  options.train_count = args.train_count;
  options.seeded_split = args.split_seed_given ? 1 : 0;
  options.split_seed = args.split_seed;
  options.noise = parse_on_off(args.noise) ? 1 : 0;
  options.noise_seed = args.seed;
  options.sample_images = args.sample_images;
  double seconds = 0;
  const aseg_status status = aseg_evaluate(checkpoint, &options, &seconds);
  aseg_checkpoint_close(checkpoint);
  check(status, "evaluation failed");
  print_file((fs::path(args.out) / "summary.txt").string());
  return kExitOk;
}

int run_infer(const InferArgs& args) {
  Echo echo{{"command", "infer"},   {"checkpoint", args.checkpoint}, {"image", args.image},
            {"out", args.out},      {"noise", args.noise},           {"raw", args.raw},
            {"seed", std::to_string(args.seed)}};
  write_echo(args.out, echo);

  aseg_checkpoint* checkpoint = nullptr;
  check(aseg_checkpoint_open(args.checkpoint.c_str(), &checkpoint), "cannot open checkpoint");
  const std::string mask_path = (fs::path(args.out) / "mask.png").string();
  const std::string raw_path = (fs::path(args.out) / "raw.png").string();
  const bool want_raw = parse_on_off(args.raw);
  const aseg_status status =
      aseg_infer(checkpoint, args.image.c_str(), mask_path.c_str(),
                 parse_on_off(args.noise) ? 1 : 0, args.seed, want_raw ? raw_path.c_str() : nullptr);
  aseg_checkpoint_close(checkpoint);
  check(status, "inference failed");
  std::cout << "wrote " << mask_path << "\n";
  if (want_raw) std::cout << "wrote " << raw_path << "\n";
  return kExitOk;
}

int run_gradcheck() {
  aseg_grad_check_result* result = nullptr;
  check(aseg_grad_check_run(&result), "gradient check failed to run");
  const size_t count = aseg_grad_check_count(result);
  bool all_ok = true;
  for (size_t i = 0; i < count; ++i) {
    const char* name = nullptr;
    double err = 0, tol = 0;
    aseg_grad_check_case(result, i, &name, &err, &tol);
    const bool ok = err <= tol;
    all_ok = all_ok && ok;
    std::printf("%-32s max_rel_err=%.3e tol=%.0e %s\n", name, err, tol, ok ? "ok" : "FAIL");
  }
  aseg_grad_check_free(result);
  if (!all_ok) throw CliError("gradient check found mismatches");
  std::cout << "all " << count << " gradient checks passed\n";
  return kExitOk;
}

int run_compare(const CompareArgs& args) {
  if (!args.out.empty()) {
    Echo echo{{"command", "compare"}, {"report-a", args.report_a}, {"report-b", args.report_b},
              {"label-a", args.label_a}, {"label-b", args.label_b}, {"out", args.out}};
    write_echo(args.out, echo);
  }
  aseg_compare_options options;
  aseg_compare_options_init(&options);
  options.report_a = args.report_a.c_str();
  options.report_b = args.report_b.c_str();
  options.label_a = args.label_a.c_str();
  options.label_b = args.label_b.c_str();
  options.train_time_a = args.train_time_a.empty() ? nullptr : args.train_time_a.c_str();
  options.train_time_b = args.train_time_b.empty() ? nullptr : args.train_time_b.c_str();
  options.test_time_a = args.test_time_a.empty() ? nullptr : args.test_time_a.c_str();
  options.test_time_b = args.test_time_b.empty() ? nullptr : args.test_time_b.c_str();
  const std::string table_path =
      args.out.empty() ? "" : (fs::path(args.out) / "comparison.txt").string();
  options.out_path = table_path.empty() ? nullptr : table_path.c_str();
  std::vector<char> buffer(4096);
  check(aseg_compare(&options, buffer.data(), buffer.size()), "comparison failed");
  std::cout << buffer.data();
  return kExitOk;
}

void take_last_all(CLI::App* app) {
  for (CLI::Option* opt : app->get_options()) {
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial image-to-mask segmentation toolkit"};
  app.require_subcommand(1);

  PhantomArgs phantom;
  TrainArgs train;
  EvalArgs eval;
  InferArgs infer;
  CompareArgs compare;
  std::string config_path;  // consumed during pre-scan; defined so it parses

  CLI::App* phantom_cmd = app.add_subcommand("phantom", "generate a synthetic paired dataset");
  phantom_cmd->add_option("--count", phantom.count, "number of pairs")->check(CLI::Range(1, 1000000));
  phantom_cmd->add_option("--size", phantom.size, "square image size")->check(CLI::Range(16, 4096));
  phantom_cmd->add_option("--seed", phantom.seed, "generator seed");
  phantom_cmd->add_option("--noise-level", phantom.noise_level, "additive noise stddev")
      ->check(CLI::Range(0.0, 1.0));
  phantom_cmd->add_option("--out", phantom.out, "output dataset directory")->required();
  phantom_cmd->add_option("--config", config_path, "key = value config file");

  CLI::App* train_cmd = app.add_subcommand("train", "train a segmentation model");
  train_cmd->add_option("--model", train.model, "pix2pix | unet")
      ->check(CLI::IsMember({"pix2pix", "unet"}));
  train_cmd->add_option("--data", train.data, "dataset directory (images/ + masks/)")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--epochs", train.epochs, "full passes over the training set")
      ->check(CLI::Range(1, 1000000));
  train_cmd->add_option("--batch-size", train.batch_size, "samples per update")
      ->check(CLI::Range(1, 4096));
  train_cmd->add_option("--lambda", train.lambda, "pixel-fidelity weight")
      ->check(CLI::Range(0.0, 1e9));
  train_cmd->add_option("--image-size", train.image_size, "working resolution")
      ->check(CLI::Range(4, 4096));
  train_cmd->add_option("--train-count", train.train_count,
                        "train on the first N sorted pairs (0 = all)")
      ->check(CLI::Range(0, 1000000));
  train_cmd->add_option("--seed", train.seed, "training seed");
  train_cmd->add_option("--shuffle", train.shuffle, "reshuffle order each epoch")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--lr", train.lr, "learning rate")->check(CLI::Range(1e-8, 1.0));
  train_cmd->add_option("--base-width", train.base_width, "first-level filter count")
      ->check(CLI::Range(4, 1024));
  train_cmd->add_option("--depth", train.depth, "down/up levels")->check(CLI::Range(2, 10));
  train_cmd->add_option("--dropout", train.dropout, "decoder noise probability")
      ->check(CLI::Range(0.0, 0.99));
  train_cmd->add_option("--disc-base-width", train.disc_base_width,
                        "discriminator first-level filters")
      ->check(CLI::Range(4, 1024));
  train_cmd->add_option("--disc-layers", train.disc_layers, "discriminator stride-2 layers")
      ->check(CLI::Range(1, 8));
  train_cmd->add_option("--split-seed", train.split_seed,
                        "shuffle the train/test split with this seed")
      ->each([&train](const std::string&) { train.split_seed_given = true; });
  train_cmd->add_option("--config", config_path, "key = value config file");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "trained .aseg file")->required();
  eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval.out, "output directory")->required();
  eval_cmd->add_option("--split", eval.split, "train | test")
      ->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--train-count", eval.train_count,
                       "split rule the training run used (0 = everything is test)")
      ->check(CLI::Range(0, 1000000));
  eval_cmd->add_option("--noise", eval.noise, "keep generator noise active")
      ->check(CLI::IsMember({"on", "off"}));
  eval_cmd->add_option("--seed", eval.seed, "noise seed");
  eval_cmd->add_option("--split-seed", eval.split_seed, "seeded split, must match training")
      ->each([&eval](const std::string&) { eval.split_seed_given = true; });
  eval_cmd->add_option("--sample-images", eval.sample_images, "triptych strips to write")
      ->check(CLI::Range(0, 10000));
  eval_cmd->add_option("--config", config_path, "key = value config file");

  CLI::App* infer_cmd = app.add_subcommand("infer", "segment one image file");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "trained .aseg file")->required();
  infer_cmd->add_option("--image", infer.image, "input PNG")->required();
  infer_cmd->add_option("--out", infer.out, "output directory")->required();
  infer_cmd->add_option("--noise", infer.noise, "keep generator noise active")
      ->check(CLI::IsMember({"on", "off"}));
  infer_cmd->add_option("--raw", infer.raw, "also write the pre-threshold output")
      ->check(CLI::IsMember({"on", "off"}));
  infer_cmd->add_option("--seed", infer.seed, "noise seed");
  infer_cmd->add_option("--config", config_path, "key = value config file");

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
  gradcheck_cmd->add_option("--config", config_path, "key = value config file");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "two result reports side by side");
  compare_cmd->add_option("--report-a", compare.report_a, "records.csv of method A")->required();
  compare_cmd->add_option("--report-b", compare.report_b, "records.csv of method B")->required();
  compare_cmd->add_option("--label-a", compare.label_a, "row label for A");
  compare_cmd->add_option("--label-b", compare.label_b, "row label for B");
  compare_cmd->add_option("--train-time-a", compare.train_time_a, "training time of A");
  compare_cmd->add_option("--train-time-b", compare.train_time_b, "training time of B");
  compare_cmd->add_option("--test-time-a", compare.test_time_a, "test time of A");
  compare_cmd->add_option("--test-time-b", compare.test_time_b, "test time of B");
  compare_cmd->add_option("--out", compare.out, "output directory");
  compare_cmd->add_option("--config", config_path, "key = value config file");

  for (CLI::App* sub : app.get_subcommands({})) take_last_all(sub);
  take_last_all(&app);

  // Config-file values are injected before the explicit flags, so the command
  // line always wins.
  std::vector<std::string> args;
  try {
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    std::string from_config;
    for (size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        from_config = args[i + 1];
      } else if (args[i].rfind("--config=", 0) == 0) {
        from_config = args[i].substr(9);
      }
    }
    if (!from_config.empty() && !args.empty() && args[0][0] != '-') {
      const std::vector<std::string> injected = config_file_args(from_config);
      args.insert(args.begin() + 1, injected.begin(), injected.end());
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic and usage hint
    return kExitUsage;
  }

  try {
    if (phantom_cmd->parsed()) return run_phantom(phantom);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (infer_cmd->parsed()) return run_infer(infer);
    if (gradcheck_cmd->parsed()) return run_gradcheck();
    if (compare_cmd->parsed()) return run_compare(compare);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
