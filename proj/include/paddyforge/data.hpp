#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paddyforge/tensor.hpp"

namespace pf {

// Binary PPM (P6) codec, the engine's sole on-disk image format.
// decode: 3-channel CHW float in [0,1]; samples are value/maxval; maxval up to
// 65535 (two big-endian bytes per sample above 255); '#' comments skipped.
// Malformed input raises FormatError naming the byte offset.
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor& chw, int maxval = 255);

Tensor load_image(const std::filesystem::path& path);
void save_image(const Tensor& chw, const std::filesystem::path& path, int maxval = 255);

struct DataItem {
    std::filesystem::path path;
    int label = 0;
};

// Folder-per-class image collection. Items are path-sorted and decoded lazily.
struct Dataset {
    std::vector<DataItem> items;
    std::vector<std::string> classes;
    std::filesystem::path root;

    std::size_t size() const { return items.size(); }
};

// root/<class_name>/*.ppm with sorted class names; needs >= 2 classes, every
// class nonempty.
Dataset load_image_dataset(const std::filesystem::path& root);

struct Split {
    Dataset train;
    Dataset val;
};

// Per-class seeded shuffle; round-half-even share of each class goes to val.
Split stratified_split(const Dataset& ds, double val_fraction, std::uint64_t seed);

struct Batch {
    Tensor inputs;                      // [N,3,H,W]
    Tensor targets;                     // [N,K] one-hot rows
    std::vector<std::size_t> indices;   // originating dataset item indices
};

// Seeded-shuffle pass over a dataset; images bilinear-resized to `target`;
// the final short batch is emitted.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                  std::size_t epoch, Shape2D target);

    // Fills `out` and returns true, or returns false when the epoch is done.
    bool next(Batch& out);

    std::size_t num_batches() const;

private:
    const Dataset* ds_;
    std::size_t batch_size_;
    Shape2D target_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

// Writes out/<class_k>/img_<i>.ppm for K classes: a hue-separated background
// with class-specific geometry (stripes on even classes, blobs on odd) plus
// seeded Gaussian noise. Regeneration with the same arguments is byte-identical.
void gen_synthetic_dataset(const std::filesystem::path& out, int classes, int per_class,
                           Shape2D size, std::uint64_t seed);

}  // namespace pf
