#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgopt/matrix.hpp"

namespace mgopt {

// One feature table (CSV: sample_id column followed by numeric features).
struct OmicsView {
  std::string name;
  std::vector<std::string> feature_names;
  DenseMatrix features;  // samples x features, rows aligned across views
};

struct MultiOmicsDataset {
  std::vector<OmicsView> views;
  std::vector<std::string> sample_ids;
  std::vector<int> labels;                // contiguous class indices
  std::vector<std::string> label_names;   // index -> original label string

  std::size_t sample_count() const { return sample_ids.size(); }
  std::size_t view_count() const { return views.size(); }
  std::size_t class_count() const { return label_names.size(); }
};

// Labeled/unlabeled partition for semi-supervised training. train_indices is
// the labeled set; test_indices is everything else.
struct LabelMask {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct SynthSpec {
  std::size_t samples = 400;
  std::vector<std::size_t> dims = {64, 64, 64};  // one width per view
  std::size_t classes = 4;
  double separation = 5.0;   // scale of the class centroids
  double noise_sigma = 1.0;  // per-entry Gaussian noise around the centroid
  std::uint64_t seed = 7;
};

// Loads one or more view CSVs plus a label CSV. Rows of every view are
// re-ordered to the label file's sample order; labels are mapped to
// contiguous indices by first appearance. Set zscore to standardize each
// feature column (constant columns are centered to zero).
MultiOmicsDataset load_dataset(const std::vector<std::string>& view_paths,
                               const std::string& label_path,
                               bool zscore = false);

// Gaussian clusters: per view and class a centroid is drawn with entries
// separation * N(0,1); each sample is its class centroid plus
// noise_sigma * N(0,1). Class labels are balanced and shuffled.
MultiOmicsDataset synth_generate(const SynthSpec& spec);

// Writes view_1.csv .. view_M.csv and labels.csv into out_dir. Feature cells
// use hexadecimal float literals so a reload reproduces the values bit for
// bit. Returns the written file paths (views first, then labels).
std::vector<std::string> save_dataset_csv(const MultiOmicsDataset& dataset,
                                          const std::string& out_dir);

// Stratified split: ceil(label_ratio * count) samples of every class go to
// the labeled set, chosen by seeded shuffle; both index lists are sorted.
LabelMask split_semi_supervised(const MultiOmicsDataset& dataset,
                                double label_ratio, std::uint64_t seed);

void zscore_columns(DenseMatrix& features);

}  // namespace mgopt
