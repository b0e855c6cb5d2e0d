#include "aseg.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "core/gradcheck_suite.hpp"
#include "core/workflows.hpp"

namespace {

thread_local std::string g_last_error;

aseg_status to_status(aseg::ErrorCode code) {
  switch (code) {
    case aseg::ErrorCode::invalid_argument:
      return ASEG_ERR_INVALID_ARGUMENT;
    case aseg::ErrorCode::io:
      return ASEG_ERR_IO;
    case aseg::ErrorCode::format:
      return ASEG_ERR_FORMAT;
    case aseg::ErrorCode::numeric:
      return ASEG_ERR_NUMERIC;
    case aseg::ErrorCode::internal:
      return ASEG_ERR_INTERNAL;
  }
  return ASEG_ERR_INTERNAL;
}

template <class Fn>
aseg_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return ASEG_OK;
  } catch (const aseg::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ASEG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ASEG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ASEG_ERR_INTERNAL;
  }
}

aseg_status invalid(const char* message) {
  g_last_error = message;
  return ASEG_ERR_INVALID_ARGUMENT;
}

std::string string_or(const char* value, const char* fallback) {
  return value ? std::string(value) : std::string(fallback);
}

}  // namespace

struct aseg_checkpoint {
  aseg::Checkpoint value;
};

struct aseg_grad_check_result {
  std::vector<aseg::GradCheckCase> cases;
};

extern "C" {

const char* aseg_version(void) { return "1.0.0"; }

const char* aseg_status_name(aseg_status status) {
  switch (status) {
    case ASEG_OK:
      return "ok";
    case ASEG_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case ASEG_ERR_IO:
      return "io error";
    case ASEG_ERR_FORMAT:
      return "format error";
    case ASEG_ERR_NUMERIC:
      return "numeric error";
    case ASEG_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* aseg_last_error(void) { return g_last_error.c_str(); }

void aseg_phantom_options_init(aseg_phantom_options* options) {
  if (!options) return;
  options->count = 8;
  options->image_size = 64;
  options->seed = 1;
  options->noise_level = 0.02f;
}

aseg_status aseg_generate_phantoms(const char* out_dir, const aseg_phantom_options* options) {
  if (!out_dir || !options) return invalid("aseg_generate_phantoms: null argument");
  return guarded([&] {
    aseg::PhantomConfig config;
    config.count = static_cast<int>(options->count);
    config.image_size = static_cast<int>(options->image_size);
    config.seed = options->seed;
    config.noise_level = options->noise_level;
    aseg::generate_phantoms(config, out_dir);
  });
}

void aseg_train_options_init(aseg_train_options* options) {
  if (!options) return;
  std::memset(options, 0, sizeof(*options));
  options->model = ASEG_MODEL_PIX2PIX;
  options->epochs = 1;
  options->batch_size = 1;
  options->lambda_l1 = 100.0f;
  options->image_size = 64;
  options->train_count = 0;
  options->seed = 1;
  options->shuffle = 1;
  options->learning_rate = 2e-4f;
  options->beta1 = 0.5f;
  options->beta2 = 0.999f;
  options->base_width = 16;
  options->depth = 4;
  options->dropout_p = 0.5f;
  options->disc_base_width = 16;
  options->disc_layers = 3;
}

aseg_status aseg_train(const aseg_train_options* options) {
  if (!options || !options->data_dir || !options->out_dir) {
    return invalid("aseg_train: null options or paths");
  }
  return guarded([&] {
    aseg::TrainRunOptions run;
    run.data_dir = options->data_dir;
    run.out_dir = options->out_dir;
    run.train_count = options->train_count;
    run.seeded_split = options->seeded_split != 0;
    run.split_seed = options->split_seed;

    aseg::TrainConfig& config = run.config;
    config.model = options->model == ASEG_MODEL_PIX2PIX ? aseg::ModelKind::pix2pix
                                                        : aseg::ModelKind::unet_baseline;
    config.epochs = static_cast<int>(options->epochs);
    config.batch_size = static_cast<int>(options->batch_size);
    config.lambda_l1 = options->lambda_l1;
    config.seed = options->seed;
    config.shuffle = options->shuffle != 0;
    config.generator.base_width = static_cast<int>(options->base_width);
    config.generator.depth = static_cast<int>(options->depth);
    config.generator.dropout_p = options->dropout_p;
    config.generator.image_size = static_cast<int>(options->image_size);
    config.discriminator.base_width = static_cast<int>(options->disc_base_width);
    config.discriminator.n_layers = static_cast<int>(options->disc_layers);
    config.optimizer.learning_rate = options->learning_rate;
    config.optimizer.beta1 = options->beta1;
    config.optimizer.beta2 = options->beta2;
    aseg::run_training(run);
  });
}

aseg_status aseg_checkpoint_open(const char* path, aseg_checkpoint** out) {
  if (!path || !out) return invalid("aseg_checkpoint_open: null argument");
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<aseg_checkpoint>();
    handle->value = aseg::load_checkpoint(path);
    *out = handle.release();
  });
}

void aseg_checkpoint_close(aseg_checkpoint* checkpoint) { delete checkpoint; }

aseg_status aseg_checkpoint_model(const aseg_checkpoint* checkpoint, aseg_model_kind* kind) {
  if (!checkpoint || !kind) return invalid("aseg_checkpoint_model: null argument");
  *kind = checkpoint->value.model == aseg::ModelKind::pix2pix ? ASEG_MODEL_PIX2PIX
                                                              : ASEG_MODEL_UNET_BASELINE;
  return ASEG_OK;
}

aseg_status aseg_checkpoint_image_size(const aseg_checkpoint* checkpoint, uint32_t* image_size) {
  if (!checkpoint || !image_size) return invalid("aseg_checkpoint_image_size: null argument");
  *image_size = static_cast<uint32_t>(checkpoint->value.generator_spec.image_size);
  return ASEG_OK;
}

aseg_status aseg_checkpoint_step(const aseg_checkpoint* checkpoint, uint32_t* step) {
  if (!checkpoint || !step) return invalid("aseg_checkpoint_step: null argument");
  *step = checkpoint->value.step;
  return ASEG_OK;
}

void aseg_eval_options_init(aseg_eval_options* options) {
  if (!options) return;
  std::memset(options, 0, sizeof(*options));
  options->split = "test";
  options->sample_images = 8;
}

aseg_status aseg_evaluate(const aseg_checkpoint* checkpoint, const aseg_eval_options* options,
                          double* test_seconds) {
  if (!checkpoint || !options || !options->data_dir || !options->out_dir) {
    return invalid("aseg_evaluate: null options or paths");
  }
  return guarded([&] {
    aseg::EvalRunOptions run;
    run.data_dir = options->data_dir;
    run.out_dir = options->out_dir;
    const std::string split = string_or(options->split, "test");
    aseg::require_arg(split == "train" || split == "test",
                      "aseg_evaluate: split must be 'train' or 'test'");
    run.split = split == "train" ? aseg::Split::train : aseg::Split::test;
    run.train_count = options->train_count;
    run.seeded_split = options->seeded_split != 0;
    run.split_seed = options->split_seed;
    run.noise = options->noise != 0;
    run.noise_seed = options->noise_seed;
    run.sample_images = static_cast<int>(options->sample_images);
    const aseg::EvalResult result = aseg::run_evaluation(checkpoint->value, run);
    if (test_seconds) *test_seconds = result.seconds;
  });
}

aseg_status aseg_infer(const aseg_checkpoint* checkpoint, const char* image_png,
                       const char* mask_png_out, int noise, uint64_t noise_seed,
                       const char* raw_png_out) {
  if (!checkpoint || !image_png || !mask_png_out) return invalid("aseg_infer: null argument");
  return guarded([&] {
    aseg::infer(checkpoint->value, image_png, mask_png_out, noise != 0, noise_seed,
                string_or(raw_png_out, ""));
  });
}

aseg_status aseg_grad_check_run(aseg_grad_check_result** out) {
  if (!out) return invalid("aseg_grad_check_run: null argument");
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<aseg_grad_check_result>();
    handle->cases = aseg::run_grad_check_suite();
    *out = handle.release();
  });
}

size_t aseg_grad_check_count(const aseg_grad_check_result* result) {
  return result ? result->cases.size() : 0;
}

aseg_status aseg_grad_check_case(const aseg_grad_check_result* result, size_t index,
                                 const char** name, double* max_rel_error, double* tolerance) {
  if (!result || index >= result->cases.size()) {
    return invalid("aseg_grad_check_case: bad handle or index");
  }
  const aseg::GradCheckCase& c = result->cases[index];
  if (name) *name = c.name.c_str();
  if (max_rel_error) *max_rel_error = c.max_rel_error;
  if (tolerance) *tolerance = c.tolerance;
  return ASEG_OK;
}

int aseg_grad_check_passed(const aseg_grad_check_result* result) {
  if (!result) return 0;
  for (const auto& c : result->cases) {
    if (!c.passed()) return 0;
  }
  return 1;
}

void aseg_grad_check_free(aseg_grad_check_result* result) { delete result; }

void aseg_compare_options_init(aseg_compare_options* options) {
  if (!options) return;
  std::memset(options, 0, sizeof(*options));
}

aseg_status aseg_compare(const aseg_compare_options* options, char* buffer, size_t capacity) {
  if (!options || !options->report_a || !options->report_b) {
    return invalid("aseg_compare: null options or report paths");
  }
  return guarded([&] {
    aseg::CompareOptions compare;
    compare.report_a = options->report_a;
    compare.report_b = options->report_b;
    compare.label_a = string_or(options->label_a, "A");
    compare.label_b = string_or(options->label_b, "B");
    compare.train_time_a = string_or(options->train_time_a, "");
    compare.train_time_b = string_or(options->train_time_b, "");
    compare.test_time_a = string_or(options->test_time_a, "");
    compare.test_time_b = string_or(options->test_time_b, "");
    compare.out_path = string_or(options->out_path, "");
    const std::string table = aseg::run_comparison(compare);
    if (buffer && capacity > 0) {
      const size_t n = std::min(capacity - 1, table.size());
      std::memcpy(buffer, table.data(), n);
      buffer[n] = '\0';
    }
  });
}

}  // extern "C"
