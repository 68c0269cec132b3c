#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "planmae/raster.hpp"

namespace planmae {

/// Half-open axis-aligned rectangle [x0, x1) x [y0, y1) in layout units.
struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const noexcept { return x1 - x0; }
    int height() const noexcept { return y1 - y0; }
    long area() const noexcept { return static_cast<long>(width()) * height(); }
    bool overlaps(const Rect& o) const noexcept {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
    bool contains(double x, double y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const Rect&) const = default;
};

enum class RoomType { living, bedroom, kitchen, bathroom, balcony, corridor };
std::string_view to_string(RoomType t);

struct Room {
    Rect rect;
    RoomType type = RoomType::bedroom;

    bool operator==(const Room&) const = default;
};

/// Generator knobs. Layout coordinates live on a `canvas` x `canvas`
/// integer lattice that render() scales to the output resolution.
struct LayoutConstraints {
    int canvas = 256;
    int min_rooms = 3;
    int max_rooms = 8;
    double l_shape_probability = 0.3;
    int max_attempts = 16;
};

/// A residential plan: an outer rectangle, optionally with one corner notch
/// cut away (L shape), tiled exactly by rectangular rooms.
struct LayoutSpec {
    std::uint64_t seed = 0;
    Rect boundary;
    std::optional<Rect> notch;
    std::vector<Room> rooms;

    long floor_area() const noexcept { return boundary.area() - (notch ? notch->area() : 0); }

    bool operator==(const LayoutSpec&) const = default;
};

/// Recursive axis-aligned splitting with seeded positions. Each room keeps
/// at least 1/8 of the boundary width and height. Room types:
///   1. the largest room is the living room;
///   2. the thinnest other room with aspect ratio >= 3 becomes a corridor;
///   3. of the remaining rooms touching the exterior outline, the smallest
///      is the bathroom and the next smallest the kitchen (interior rooms
///      are used only if too few exterior ones remain);
///   4. with six or more rooms, the smallest remaining exterior room is a
///      balcony;
///   5. everything else is a bedroom.
/// Failed attempts are retried with deterministically derived seeds; after
/// max_attempts, ConstraintUnsatisfiable.
LayoutSpec gen_layout(std::uint64_t seed, const LayoutConstraints& constraints = {});

struct Rgb {
    float r, g, b;
    bool operator==(const Rgb&) const = default;
};

struct Palette {
    Rgb living{1.0f, 0xD9 / 255.0f, 0xA0 / 255.0f};
    Rgb bedroom{0xA0 / 255.0f, 0xC8 / 255.0f, 1.0f};
    Rgb kitchen{1.0f, 0xB3 / 255.0f, 0xB3 / 255.0f};
    Rgb bathroom{0xB3 / 255.0f, 0xE6 / 255.0f, 0xCC / 255.0f};
    Rgb balcony{0xE6 / 255.0f, 0xCC / 255.0f, 1.0f};
    Rgb corridor{0xF0 / 255.0f, 0xF0 / 255.0f, 0xF0 / 255.0f};
    Rgb wall{0.0f, 0.0f, 0.0f};
    Rgb background{1.0f, 1.0f, 1.0f};

    const Rgb& room(RoomType t) const;
    nlohmann::json to_json() const;
};

/// Colored: rooms filled from the palette over a white background, walls
/// black. Line drawing: walls only, single channel. Walls are
/// max(1, resolution/128) pixels wide.
Raster render(const LayoutSpec& layout, Mode mode, int resolution, const Palette& palette = {},
              int canvas = 256);

struct SplitCounts {
    int train = 7000;
    int val = 500;
    int test = 500;

    int total() const noexcept { return train + val + test; }
    bool operator==(const SplitCounts&) const = default;
};

struct CorpusManifest {
    std::filesystem::path root;
    SplitCounts counts;
    std::uint64_t seed = 0;
    int resolution = 256;
    Mode mode = Mode::line_drawing;
};

inline constexpr std::array<std::string_view, 3> kSplits{"train", "val", "test"};

/// Seed of image `index` in split `split` (0 train, 1 val, 2 test). Distinct
/// (split, index) pairs always give distinct seeds.
std::uint64_t image_seed(std::uint64_t master, int split, std::uint64_t index);

/// Writes <root>/{train,val,test}/NNNNNN.png and <root>/manifest.json.
CorpusManifest build_corpus(const std::filesystem::path& out_dir, const SplitCounts& counts,
                            std::uint64_t seed, Mode mode, int resolution);

/// Reads every PNG of one split in filename order. Works for generated
/// corpora and for user-supplied ones with the same directory layout.
/// Images must be `resolution` square (or are resampled when `resize`).
std::vector<Raster> load_split(const std::filesystem::path& root, std::string_view split,
                               int resolution, Mode mode, bool resize = false);

}  // namespace planmae
