#include "planmae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "planmae/error.hpp"
#include "planmae/image_io.hpp"
#include "planmae/rng.hpp"

namespace planmae {

namespace {

int uniform_int(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

bool spans_overlap(int a0, int a1, int b0, int b1) { return a0 < b1 && b0 < a1; }

bool touches_exterior(const Rect& r, const LayoutSpec& layout) {
    const Rect& b = layout.boundary;
    if (r.x0 == b.x0 || r.x1 == b.x1 || r.y0 == b.y0 || r.y1 == b.y1) return true;
    if (!layout.notch) return false;
    const Rect& n = *layout.notch;
    return ((r.x1 == n.x0 || r.x0 == n.x1) && spans_overlap(r.y0, r.y1, n.y0, n.y1)) ||
           ((r.y1 == n.y0 || r.y0 == n.y1) && spans_overlap(r.x0, r.x1, n.x0, n.x1));
}

double aspect(const Rect& r) {
    const int lo = std::min(r.width(), r.height());
    const int hi = std::max(r.width(), r.height());
    return static_cast<double>(hi) / lo;
}

void assign_types(LayoutSpec& layout, int total_rooms) {
    auto& rooms = layout.rooms;
    std::vector<bool> done(rooms.size(), false);
    auto smallest = [&](auto&& eligible) -> std::optional<std::size_t> {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < rooms.size(); ++i) {
            if (done[i] || !eligible(i)) continue;
            if (!best || rooms[i].rect.area() < rooms[*best].rect.area()) best = i;
        }
        return best;
    };
    auto take = [&](std::size_t i, RoomType t) {
        rooms[i].type = t;
        done[i] = true;
    };

    std::size_t living = 0;
    for (std::size_t i = 1; i < rooms.size(); ++i) {
        if (rooms[i].rect.area() > rooms[living].rect.area()) living = i;
    }
    take(living, RoomType::living);

    std::optional<std::size_t> corridor;
    for (std::size_t i = 0; i < rooms.size(); ++i) {
        if (done[i] || aspect(rooms[i].rect) < 3.0) continue;
        if (!corridor || aspect(rooms[i].rect) > aspect(rooms[*corridor].rect)) corridor = i;
    }
    if (corridor) take(*corridor, RoomType::corridor);

    auto exterior = [&](std::size_t i) { return touches_exterior(rooms[i].rect, layout); };
    auto any = [](std::size_t) { return true; };
    for (RoomType wet : {RoomType::bathroom, RoomType::kitchen}) {
        auto pick = smallest(exterior);
        if (!pick) pick = smallest(any);
        if (pick) take(*pick, wet);
    }
    if (total_rooms >= 6) {
        if (auto pick = smallest(exterior)) take(*pick, RoomType::balcony);
    }
    for (std::size_t i = 0; i < rooms.size(); ++i) {
        if (!done[i]) take(i, RoomType::bedroom);
    }
}

std::optional<LayoutSpec> try_layout(std::uint64_t seed, const LayoutConstraints& k) {
    Rng rng(seed);
    const int c = k.canvas;
    const int margin = c / 32;
    LayoutSpec layout;
    layout.seed = seed;

    const int w = uniform_int(rng, c * 5 / 8, c - 2 * margin);
    const int h = uniform_int(rng, c * 5 / 8, c - 2 * margin);
    const int x0 = margin + uniform_int(rng, 0, c - 2 * margin - w);
    const int y0 = margin + uniform_int(rng, 0, c - 2 * margin - h);
    layout.boundary = {x0, y0, x0 + w, y0 + h};
    const Rect& b = layout.boundary;
    const int min_w = (w + 7) / 8;
    const int min_h = (h + 7) / 8;

    std::vector<Rect> pieces;
    if (rng.uniform() < k.l_shape_probability) {
        const int corner = uniform_int(rng, 0, 3);
        const int nw = w / 4 + uniform_int(rng, 0, w / 4);
        const int nh = h / 4 + uniform_int(rng, 0, h / 4);
        const bool right = corner == 1 || corner == 3;
        const bool bottom = corner >= 2;
        const int split_x = right ? b.x1 - nw : b.x0 + nw;
        const Rect notch{right ? split_x : b.x0, bottom ? b.y1 - nh : b.y0, right ? b.x1 : split_x,
                         bottom ? b.y1 : b.y0 + nh};
        layout.notch = notch;
        // Full-height strip beside the notch, plus the part of the notch
        // column that remains.
        pieces.push_back(right ? Rect{b.x0, b.y0, split_x, b.y1} : Rect{split_x, b.y0, b.x1, b.y1});
        pieces.push_back(bottom ? Rect{notch.x0, b.y0, notch.x1, notch.y0}
                                : Rect{notch.x0, notch.y1, notch.x1, b.y1});
    } else {
        pieces.push_back(b);
    }

    const int target = uniform_int(rng, k.min_rooms, k.max_rooms);
    while (static_cast<int>(pieces.size()) < target) {
        long total = 0;
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            if (pieces[i].width() >= 2 * min_w || pieces[i].height() >= 2 * min_h) {
                candidates.push_back(i);
                total += pieces[i].area();
            }
        }
        if (candidates.empty()) return std::nullopt;
        // Area-weighted choice of the room to split.
        auto pick = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
        std::size_t chosen = candidates.back();
        for (std::size_t i : candidates) {
            if (pick < pieces[i].area()) {
                chosen = i;
                break;
            }
            pick -= pieces[i].area();
        }
        const Rect r = pieces[chosen];
        const bool can_v = r.width() >= 2 * min_w;
        const bool can_h = r.height() >= 2 * min_h;
        bool vertical = can_v;
        if (can_v && can_h) {
            const bool prefer_v = r.width() >= r.height();
            vertical = rng.uniform() < 0.75 ? prefer_v : !prefer_v;
        }
        if (vertical) {
            const int x = r.x0 + min_w + uniform_int(rng, 0, r.width() - 2 * min_w);
            pieces[chosen] = {r.x0, r.y0, x, r.y1};
            pieces.push_back({x, r.y0, r.x1, r.y1});
        } else {
            const int y = r.y0 + min_h + uniform_int(rng, 0, r.height() - 2 * min_h);
            pieces[chosen] = {r.x0, r.y0, r.x1, y};
            pieces.push_back({r.x0, y, r.x1, r.y1});
        }
    }
    if (static_cast<int>(pieces.size()) < k.min_rooms || static_cast<int>(pieces.size()) > k.max_rooms) {
        return std::nullopt;
    }
    std::sort(pieces.begin(), pieces.end(), [](const Rect& a, const Rect& b2) {
        return std::tie(a.y0, a.x0) < std::tie(b2.y0, b2.x0);
    });
    for (const Rect& r : pieces) layout.rooms.push_back({r, RoomType::bedroom});
    assign_types(layout, static_cast<int>(pieces.size()));
    return layout;
}

}  // namespace

std::string_view to_string(RoomType t) {
    switch (t) {
        case RoomType::living: return "living";
        case RoomType::bedroom: return "bedroom";
        case RoomType::kitchen: return "kitchen";
        case RoomType::bathroom: return "bathroom";
        case RoomType::balcony: return "balcony";
        case RoomType::corridor: return "corridor";
    }
    return "bedroom";
}

LayoutSpec gen_layout(std::uint64_t seed, const LayoutConstraints& constraints) {
    if (constraints.min_rooms < 1 || constraints.max_rooms < constraints.min_rooms ||
        constraints.canvas < 64) {
        throw Error(ErrorCode::ConstraintUnsatisfiable, "invalid layout constraints");
    }
    for (int attempt = 0; attempt < constraints.max_attempts; ++attempt) {
        const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(attempt));
        if (auto layout = try_layout(s, constraints)) {
            layout->seed = seed;
            return *layout;
        }
    }
    throw Error(ErrorCode::ConstraintUnsatisfiable,
                "no valid layout for seed " + std::to_string(seed) + " after " +
                    std::to_string(constraints.max_attempts) + " attempts");
}

const Rgb& Palette::room(RoomType t) const {
    switch (t) {
        case RoomType::living: return living;
        case RoomType::bedroom: return bedroom;
        case RoomType::kitchen: return kitchen;
        case RoomType::bathroom: return bathroom;
        case RoomType::balcony: return balcony;
        case RoomType::corridor: return corridor;
    }
    return bedroom;
}

nlohmann::json Palette::to_json() const {
    auto hex = [](const Rgb& c) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02X%02X%02X", static_cast<int>(std::lround(c.r * 255)),
                      static_cast<int>(std::lround(c.g * 255)), static_cast<int>(std::lround(c.b * 255)));
        return std::string(buf);
    };
    return {{"living", hex(living)},   {"bedroom", hex(bedroom)}, {"kitchen", hex(kitchen)},
            {"bathroom", hex(bathroom)}, {"balcony", hex(balcony)}, {"corridor", hex(corridor)},
            {"wall", hex(wall)},       {"background", hex(background)}};
}

Raster render(const LayoutSpec& layout, Mode mode, int resolution, const Palette& palette, int canvas) {
    if (resolution <= 0) throw Error(ErrorCode::BadConfig, "resolution must be positive");
    const int ch = channels_for(mode);
    const auto n = static_cast<std::size_t>(resolution) * resolution;
    std::vector<float> data(n * ch, 1.0f);
    auto paint = [&](int px, int py, const Rgb& color) {
        if (px < 0 || py < 0 || px >= resolution || py >= resolution) return;
        const std::size_t i = static_cast<std::size_t>(py) * resolution + px;
        if (ch == 1) {
            data[i] = (color.r + color.g + color.b) / 3.0f;
        } else {
            data[3 * i] = color.r;
            data[3 * i + 1] = color.g;
            data[3 * i + 2] = color.b;
        }
    };

    const double units_per_px = static_cast<double>(canvas) / resolution;
    if (mode == Mode::colored) {
        for (int py = 0; py < resolution; ++py) {
            for (int px = 0; px < resolution; ++px) {
                const double u = (px + 0.5) * units_per_px;
                const double v = (py + 0.5) * units_per_px;
                for (const Room& room : layout.rooms) {
                    if (room.rect.contains(u, v)) {
                        paint(px, py, palette.room(room.type));
                        break;
                    }
                }
            }
        }
    }

    const int wall = std::max(1, resolution / 128);
    const int lead = (wall - 1) / 2;
    auto to_px = [&](int units) {
        return std::min(resolution - 1, static_cast<int>(std::floor(units / units_per_px)));
    };
    const Rgb& wall_color = mode == Mode::colored ? palette.wall : Rgb{0.0f, 0.0f, 0.0f};
    for (const Room& room : layout.rooms) {
        const int left = to_px(room.rect.x0);
        const int right = to_px(room.rect.x1);
        const int top = to_px(room.rect.y0);
        const int bottom = to_px(room.rect.y1);
        for (int t = 0; t < wall; ++t) {
            for (int y = top - lead; y <= bottom - lead + wall - 1; ++y) {
                paint(left - lead + t, y, wall_color);
                paint(right - lead + t, y, wall_color);
            }
            for (int x = left - lead; x <= right - lead + wall - 1; ++x) {
                paint(x, top - lead + t, wall_color);
                paint(x, bottom - lead + t, wall_color);
            }
        }
    }
    return Raster(resolution, resolution, mode, std::move(data));
}

std::uint64_t image_seed(std::uint64_t master, int split, std::uint64_t index) {
    // mix64 is a bijection and (split << 40) + index is injective for
    // index < 2^40, so distinct images never share a seed.
    return mix64(mix64(master) + (static_cast<std::uint64_t>(split) << 40) + index);
}

CorpusManifest build_corpus(const std::filesystem::path& out_dir, const SplitCounts& counts,
                            std::uint64_t seed, Mode mode, int resolution) {
    if (counts.train < 0 || counts.val < 0 || counts.test < 0) {
        throw Error(ErrorCode::BadConfig, "split counts must be non-negative");
    }
    if (resolution <= 0) throw Error(ErrorCode::BadConfig, "resolution must be positive");
    const std::array<int, 3> sizes{counts.train, counts.val, counts.test};
    try {
        for (int s = 0; s < 3; ++s) {
            const auto dir = out_dir / kSplits[static_cast<std::size_t>(s)];
            std::filesystem::create_directories(dir);
            for (int i = 0; i < sizes[static_cast<std::size_t>(s)]; ++i) {
                const LayoutSpec layout = gen_layout(image_seed(seed, s, static_cast<std::uint64_t>(i)));
                char name[32];
                std::snprintf(name, sizeof name, "%06d.png", i);
                write_png(render(layout, mode, resolution), dir / name);
            }
        }
        const nlohmann::json manifest = {
            {"seed", seed},
            {"counts", {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}}},
            {"mode", to_string(mode)},
            {"resolution", resolution},
            {"palette", Palette{}.to_json()},
        };
        std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
        out << manifest.dump(2) << "\n";
        if (!out) throw Error(ErrorCode::IoError, "cannot write manifest");
    } catch (const std::filesystem::filesystem_error& e) {
        throw Error(ErrorCode::IoError, e.what());
    }
    return CorpusManifest{out_dir, counts, seed, resolution, mode};
}

std::vector<Raster> load_split(const std::filesystem::path& root, std::string_view split,
                               int resolution, Mode mode, bool resize) {
    const auto dir = root / split;
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw Error(ErrorCode::IoError, "no split directory " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Raster> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_png(f, resolution, resize, mode));
    return out;
}

}  // namespace planmae
