/*
 * aseg — adversarial image-to-mask segmentation toolkit, C API.
 *
 * Every function returns an aseg_status; ASEG_OK means success. On failure a
 * human-readable message is kept per thread and can be fetched with
 * aseg_last_error() until the next call on the same thread. Handles returned
 * through out-parameters are owned by the caller and released with the
 * matching close/free function.
 */
#ifndef ASEG_H
#define ASEG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum aseg_status {
  ASEG_OK = 0,
  ASEG_ERR_INVALID_ARGUMENT = 1,
  ASEG_ERR_IO = 2,
  ASEG_ERR_FORMAT = 3,
  ASEG_ERR_NUMERIC = 4,
  ASEG_ERR_INTERNAL = 5
} aseg_status;

typedef enum aseg_model_kind {
  ASEG_MODEL_PIX2PIX = 1,
  ASEG_MODEL_UNET_BASELINE = 2
} aseg_model_kind;

const char* aseg_version(void);
const char* aseg_status_name(aseg_status status);
const char* aseg_last_error(void);

/* ------------------------------------------------------------------ */
/* Synthetic paired dataset                                            */

typedef struct aseg_phantom_options {
  uint32_t count;
  uint32_t image_size;
  uint64_t seed;
  float noise_level;
} aseg_phantom_options;

void aseg_phantom_options_init(aseg_phantom_options* options);

/* Writes images/ and masks/ PNG pairs under out_dir. */
aseg_status aseg_generate_phantoms(const char* out_dir, const aseg_phantom_options* options);

/* ------------------------------------------------------------------ */
/* Training                                                            */

typedef struct aseg_train_options {
  aseg_model_kind model;
  const char* data_dir; /* expects data_dir/images and data_dir/masks */
  const char* out_dir;  /* receives trainlog.csv, final.aseg, manifest.tsv, timing.txt */
  uint32_t epochs;
  uint32_t batch_size;
  float lambda_l1;
  uint32_t image_size;
  uint32_t train_count; /* 0 = train on every pair; otherwise sorted prefix */
  uint64_t seed;
  int shuffle; /* reshuffle order each epoch */
  int seeded_split;
  uint64_t split_seed;
  float learning_rate;
  float beta1;
  float beta2;
  uint32_t base_width;
  uint32_t depth;
  float dropout_p;
  uint32_t disc_base_width;
  uint32_t disc_layers;
} aseg_train_options;

void aseg_train_options_init(aseg_train_options* options);

aseg_status aseg_train(const aseg_train_options* options);

/* ------------------------------------------------------------------ */
/* Checkpoints                                                         */

typedef struct aseg_checkpoint aseg_checkpoint;

aseg_status aseg_checkpoint_open(const char* path, aseg_checkpoint** out);
void aseg_checkpoint_close(aseg_checkpoint* checkpoint);
aseg_status aseg_checkpoint_model(const aseg_checkpoint* checkpoint, aseg_model_kind* kind);
aseg_status aseg_checkpoint_image_size(const aseg_checkpoint* checkpoint, uint32_t* image_size);
aseg_status aseg_checkpoint_step(const aseg_checkpoint* checkpoint, uint32_t* step);

/* ------------------------------------------------------------------ */
/* Evaluation                                                          */

typedef struct aseg_eval_options {
  const char* data_dir;
  const char* out_dir;  /* receives records.csv, summary.txt, samples/ */
  const char* split;    /* "train" or "test" */
  uint32_t train_count; /* split rule used at training time; 0 = all test */
  int seeded_split;
  uint64_t split_seed;
  int noise; /* keep generator noise active at inference */
  uint64_t noise_seed;
  uint32_t sample_images; /* triptych strips to write, 0 disables */
} aseg_eval_options;

void aseg_eval_options_init(aseg_eval_options* options);

aseg_status aseg_evaluate(const aseg_checkpoint* checkpoint, const aseg_eval_options* options,
                          double* test_seconds);

/* Segments one PNG; writes a {0,255} mask, and optionally the raw
 * pre-threshold output when raw_png_out is non-NULL. */
aseg_status aseg_infer(const aseg_checkpoint* checkpoint, const char* image_png,
                       const char* mask_png_out, int noise, uint64_t noise_seed,
                       const char* raw_png_out);

/* ------------------------------------------------------------------ */
/* Gradient verification                                               */

#define ASEG_GRADCHECK_OP_TOLERANCE 1e-4
#define ASEG_GRADCHECK_GRAPH_TOLERANCE 1e-3

typedef struct aseg_grad_check_result aseg_grad_check_result;

/* Runs the finite-difference suite over every differentiable operation and
 * the composed loss graphs (64-bit mode). */
aseg_status aseg_grad_check_run(aseg_grad_check_result** out);
size_t aseg_grad_check_count(const aseg_grad_check_result* result);
aseg_status aseg_grad_check_case(const aseg_grad_check_result* result, size_t index,
                                 const char** name, double* max_rel_error, double* tolerance);
/* 1 when every case is within tolerance. */
int aseg_grad_check_passed(const aseg_grad_check_result* result);
void aseg_grad_check_free(aseg_grad_check_result* result);

/* ------------------------------------------------------------------ */
/* Report comparison                                                   */

typedef struct aseg_compare_options {
  const char* report_a; /* records.csv produced by aseg_evaluate */
  const char* report_b;
  const char* label_a;
  const char* label_b;
  const char* train_time_a; /* free-form; NULL renders "-" */
  const char* train_time_b;
  const char* test_time_a;
  const char* test_time_b;
  const char* out_path; /* NULL = don't write a file */
} aseg_compare_options;

void aseg_compare_options_init(aseg_compare_options* options);

/* Renders the two-row comparison table into `buffer` (NUL-terminated,
 * truncated to capacity) and optionally writes it to out_path. */
aseg_status aseg_compare(const aseg_compare_options* options, char* buffer, size_t capacity);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ASEG_H */
