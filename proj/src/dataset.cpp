#include "uqpen/dataset.hpp"

#include "uqpen/errors.hpp"
#include "uqpen/ioutil.hpp"
#include "uqpen/resample.hpp"
#include "uqpen/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

namespace uqpen {

namespace {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// A template is a list of pen-down polylines in the unit box; the pen is
// lifted between strokes.
using StrokeTemplate = std::vector<std::vector<Vec2>>;

constexpr std::uint64_t kTemplateSeed = 0x7e5eed0c5a11beadULL;

constexpr double kAccelGain = 25.0;
constexpr double kGravity = 1.0;
constexpr double kSecondPlacementGain = 1.5;
constexpr double kGyroBias = 0.1;
constexpr double kGyroAxisY = 0.4;
constexpr double kGyroAxisZ = -0.25;
constexpr double kMagFieldZ = 0.6;
constexpr double kMagYawRight = 0.4;
constexpr double kMagTiltRight = 0.3;
constexpr double kMagYawLeftExtra = 0.6;
constexpr double kMagTiltLeftExtra = 0.35;
constexpr double kPenForce = 1.0;
constexpr double kConfusableScale = 0.6;
constexpr int kTraversalBudget = 96;

StrokeTemplate class_template(int class_index) {
    RngStream stream = RngStream(kTemplateSeed).split(static_cast<std::uint64_t>(class_index));
    StrokeTemplate strokes;
    const int stroke_count = 1 + static_cast<int>(stream.next_below(2));
    for (int s = 0; s < stroke_count; ++s) {
        const int point_count = 3 + static_cast<int>(stream.next_below(3));
        std::vector<Vec2> pts(point_count);
        for (auto& p : pts) {
            p.x = stream.next_uniform();
            p.y = stream.next_uniform();
        }
        // Keep consecutive control points apart so headings are well defined.
        for (int i = 1; i < point_count; ++i) {
            int guard = 0;
            while (std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y) < 0.2 &&
                   guard++ < 64) {
                pts[i].x = stream.next_uniform();
                pts[i].y = stream.next_uniform();
            }
        }
        strokes.push_back(std::move(pts));
    }
    // Normalize the bounding box to [0.1, 0.9]^2 so every class occupies the
    // same extent and confusable pairs differ only by the designed scale.
    double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
    for (const auto& stroke : strokes) {
        for (const auto& p : stroke) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    }
    const double span_x = std::max(max_x - min_x, 1e-6);
    const double span_y = std::max(max_y - min_y, 1e-6);
    for (auto& stroke : strokes) {
        for (auto& p : stroke) {
            p.x = 0.1 + 0.8 * (p.x - min_x) / span_x;
            p.y = 0.1 + 0.8 * (p.y - min_y) / span_y;
        }
    }
    return strokes;
}

void scale_about_center(StrokeTemplate& strokes, double factor) {
    for (auto& stroke : strokes) {
        for (auto& p : stroke) {
            p.x = 0.5 + factor * (p.x - 0.5);
            p.y = 0.5 + factor * (p.y - 0.5);
        }
    }
}

struct WriterStyle {
    double scale = 1.0;
    double slant = 0.0; // radians
    double speed = 1.0;
};

WriterStyle writer_style(RngStream stream) {
    WriterStyle style;
    style.scale = 0.8 + 0.4 * stream.next_uniform();
    style.slant = (2.0 * stream.next_uniform() - 1.0) * (15.0 * M_PI / 180.0);
    style.speed = 0.8 + 0.4 * stream.next_uniform();
    return style;
}

struct PathPoint {
    Vec2 pos;
    bool pen_down = false;
};

// Walk the (styled) template at a speed-scaled step budget. Steps per
// segment are allocated by normalized arc length, so uniformly scaled
// templates traverse on identical schedules.
std::vector<PathPoint> traverse(const StrokeTemplate& strokes, double speed) {
    struct Segment {
        Vec2 a, b;
        bool pen_down;
    };
    std::vector<Segment> segments;
    for (std::size_t s = 0; s < strokes.size(); ++s) {
        const auto& stroke = strokes[s];
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            segments.push_back({stroke[i], stroke[i + 1], true});
        }
        if (s + 1 < strokes.size()) {
            segments.push_back({stroke.back(), strokes[s + 1].front(), false});
        }
    }
    double total_len = 0.0;
    for (const auto& seg : segments) {
        total_len += std::hypot(seg.b.x - seg.a.x, seg.b.y - seg.a.y);
    }
    total_len = std::max(total_len, 1e-9);
    const double budget = static_cast<double>(kTraversalBudget) / speed;

    std::vector<PathPoint> path;
    for (const auto& seg : segments) {
        const double len = std::hypot(seg.b.x - seg.a.x, seg.b.y - seg.a.y);
        const int steps = std::max(2, static_cast<int>(std::llround(budget * len / total_len)));
        for (int k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(steps);
            path.push_back({{seg.a.x + t * (seg.b.x - seg.a.x),
                             seg.a.y + t * (seg.b.y - seg.a.y)},
                            seg.pen_down});
        }
    }
    path.push_back({segments.back().b, true});
    return path;
}

Matrix synthesize_channels(const std::vector<PathPoint>& path, Hand hand) {
    const std::size_t n = path.size();
    Matrix channels(n, kChannelCount, 0.0);

    // Headings; zero-length steps reuse the previous heading.
    std::vector<double> heading(n, 0.0);
    for (std::size_t t = 0; t + 1 < n; ++t) {
        const double dx = path[t + 1].pos.x - path[t].pos.x;
        const double dy = path[t + 1].pos.y - path[t].pos.y;
        if (std::hypot(dx, dy) > 1e-12) {
            heading[t] = std::atan2(dy, dx);
        } else if (t > 0) {
            heading[t] = heading[t - 1];
        }
    }
    if (n >= 2) {
        heading[n - 1] = heading[n - 2];
    }

    const double yaw = kMagYawRight + (hand == Hand::Left ? kMagYawLeftExtra : 0.0);
    const double tilt = kMagTiltRight + (hand == Hand::Left ? kMagTiltLeftExtra : 0.0);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double ct = std::cos(tilt), st = std::sin(tilt);

    for (std::size_t t = 0; t < n; ++t) {
        double ax = 0.0, ay = 0.0;
        if (t >= 1 && t + 1 < n) {
            ax = path[t + 1].pos.x - 2.0 * path[t].pos.x + path[t - 1].pos.x;
            ay = path[t + 1].pos.y - 2.0 * path[t].pos.y + path[t - 1].pos.y;
        }
        channels(t, 0) = kAccelGain * ax;
        channels(t, 1) = kAccelGain * ay;
        channels(t, 2) = kGravity;
        channels(t, 3) = kSecondPlacementGain * kAccelGain * ax;
        channels(t, 4) = kSecondPlacementGain * kAccelGain * ay;
        channels(t, 5) = kSecondPlacementGain * kGravity;

        double dphi = 0.0;
        if (t >= 1) {
            dphi = heading[t] - heading[t - 1];
            while (dphi > M_PI) dphi -= 2.0 * M_PI;
            while (dphi < -M_PI) dphi += 2.0 * M_PI;
        }
        channels(t, 6) = dphi + kGyroBias;
        channels(t, 7) = kGyroAxisY * dphi;
        channels(t, 8) = kGyroAxisZ * dphi;
        if (hand == Hand::Left) {
            channels(t, 6) = -channels(t, 6);
        }

        // Magnetometer: unit heading in the per-hand sensor frame,
        // m = Rx(tilt) * Rz(yaw) * (cos phi, sin phi, field_z).
        const double hx = std::cos(heading[t]);
        const double hy = std::sin(heading[t]);
        const double rx = cy * hx - sy * hy;
        const double ry = sy * hx + cy * hy;
        channels(t, 9) = rx;
        channels(t, 10) = ct * ry - st * kMagFieldZ;
        channels(t, 11) = st * ry + ct * kMagFieldZ;

        channels(t, 12) = path[t].pen_down ? kPenForce : 0.0;
    }
    return channels;
}

std::vector<std::string> default_class_names(int class_count) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(class_count));
    for (int c = 0; c < class_count; ++c) {
        if (c < 26) {
            names.push_back(std::string(1, static_cast<char>('a' + c)));
        } else {
            names.push_back(std::string("z") + static_cast<char>('a' + (c - 26)));
        }
    }
    return names;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    fields.push_back(current);
    return fields;
}

} // namespace

Dataset generate(const GeneratorConfig& config) {
    if (config.class_count < 2) {
        throw std::invalid_argument("generate: class_count must be at least 2");
    }
    if (config.class_count > 52) {
        throw std::invalid_argument("generate: at most 52 classes supported");
    }
    for (const auto& [a, b] : config.confusable_pairs) {
        if (a == b || a < 0 || b < 0 || a >= config.class_count || b >= config.class_count) {
            throw std::invalid_argument("generate: invalid confusable pair");
        }
    }
    if (config.writers_right < 0 || config.writers_left < 0 ||
        config.writers_right + config.writers_left < 1) {
        throw std::invalid_argument("generate: need at least one writer");
    }
    if (config.samples_per_writer_per_class < 1) {
        throw std::invalid_argument("generate: samples_per_writer_per_class must be positive");
    }

    std::vector<StrokeTemplate> templates(static_cast<std::size_t>(config.class_count));
    for (int c = 0; c < config.class_count; ++c) {
        templates[static_cast<std::size_t>(c)] = class_template(c);
    }
    for (const auto& [a, b] : config.confusable_pairs) {
        templates[static_cast<std::size_t>(b)] = templates[static_cast<std::size_t>(a)];
        scale_about_center(templates[static_cast<std::size_t>(b)], kConfusableScale);
    }

    Dataset dataset;
    dataset.class_count = config.class_count;
    dataset.class_names = default_class_names(config.class_count);

    const RngStream root(config.seed);
    const int writer_count = config.writers_right + config.writers_left;
    int next_sample_id = 0;

    for (int w = 0; w < writer_count; ++w) {
        const Hand hand = w < config.writers_right ? Hand::Right : Hand::Left;
        const RngStream writer_stream = root.split(static_cast<std::uint64_t>(w));
        const WriterStyle style = writer_style(writer_stream.split(0));

        for (int c = 0; c < config.class_count; ++c) {
            // Style transform about the box center; left hand mirrors x.
            StrokeTemplate styled = templates[static_cast<std::size_t>(c)];
            const double cos_s = std::cos(style.slant);
            const double sin_s = std::sin(style.slant);
            for (auto& stroke : styled) {
                for (auto& p : stroke) {
                    const double x = style.scale * (p.x - 0.5);
                    const double y = style.scale * (p.y - 0.5);
                    p.x = 0.5 + cos_s * x - sin_s * y;
                    p.y = 0.5 + sin_s * x + cos_s * y;
                    if (hand == Hand::Left) {
                        p.x = 1.0 - p.x;
                    }
                }
            }
            const auto path = traverse(styled, style.speed);
            const Matrix clean = resample_linear(synthesize_channels(path, hand), kDefaultSteps);

            for (int j = 0; j < config.samples_per_writer_per_class; ++j) {
                RngStream noise_stream = writer_stream.split(
                    1 + static_cast<std::uint64_t>(c) *
                            static_cast<std::uint64_t>(config.samples_per_writer_per_class) +
                    static_cast<std::uint64_t>(j));
                MultivariateTimeSeries sample;
                sample.values = clean;
                sample.label = c;
                sample.writer_id = w;
                sample.hand = hand;
                sample.sample_id = next_sample_id++;
                // Force channel stays noise-free.
                for (int t = 0; t < kDefaultSteps; ++t) {
                    for (int ch = 0; ch < kChannelCount - 1; ++ch) {
                        sample.values(static_cast<std::size_t>(t),
                                      static_cast<std::size_t>(ch)) +=
                            config.noise_sigma * noise_stream.next_normal();
                    }
                }
                dataset.samples.push_back(std::move(sample));
            }
        }
    }
    return dataset;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
    const auto parent = path.parent_path();
    if (!parent.empty() && !std::filesystem::is_directory(parent)) {
        throw std::invalid_argument("save_csv: directory does not exist: " + parent.string());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_csv: cannot open " + path.string());
    }
    out << "sample_id,writer_id,hand,label,step";
    for (int c = 0; c < kChannelCount; ++c) {
        out << ",c" << c;
    }
    out << "\n";
    for (const auto& sample : dataset.samples) {
        const auto& name = dataset.class_names[static_cast<std::size_t>(sample.label)];
        for (std::size_t t = 0; t < sample.values.rows(); ++t) {
            out << sample.sample_id << ',' << sample.writer_id << ','
                << hand_token(sample.hand) << ',' << name << ',' << t;
            for (std::size_t c = 0; c < sample.values.cols(); ++c) {
                out << ',' << format_double(sample.values(t, c));
            }
            out << "\n";
        }
    }
}

Dataset load_csv(const std::filesystem::path& path, int target_steps) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("load_csv: cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("load_csv: empty file " + path.string());
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    std::string expected_header = "sample_id,writer_id,hand,label,step";
    for (int c = 0; c < kChannelCount; ++c) {
        expected_header += ",c" + std::to_string(c);
    }
    if (line != expected_header) {
        throw ParseError("load_csv line 1: unexpected header");
    }

    struct RawSample {
        int writer_id = 0;
        Hand hand = Hand::Right;
        std::string label;
        std::vector<std::array<double, kChannelCount>> rows;
    };
    std::map<long, RawSample> raw;
    std::vector<long> order;

    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::string ctx = "load_csv line " + std::to_string(line_no);
        const auto fields = split_fields(line);
        if (fields.size() != 5 + kChannelCount) {
            throw ParseError(ctx + ": expected " + std::to_string(5 + kChannelCount) +
                             " columns, got " + std::to_string(fields.size()));
        }
        const long sample_id = parse_long(fields[0], ctx);
        const long writer_id = parse_long(fields[1], ctx);
        Hand hand;
        if (fields[2] == "R") {
            hand = Hand::Right;
        } else if (fields[2] == "L") {
            hand = Hand::Left;
        } else {
            throw ParseError(ctx + ": unknown hand token '" + fields[2] + "'");
        }
        const std::string& label = fields[3];
        const long step = parse_long(fields[4], ctx);

        auto [it, inserted] = raw.try_emplace(sample_id);
        RawSample& rs = it->second;
        if (inserted) {
            rs.writer_id = static_cast<int>(writer_id);
            rs.hand = hand;
            rs.label = label;
            order.push_back(sample_id);
        } else if (rs.label != label || rs.hand != hand ||
                   rs.writer_id != static_cast<int>(writer_id)) {
            throw ParseError(ctx + ": inconsistent metadata for sample " +
                             std::to_string(sample_id));
        }
        if (step != static_cast<long>(rs.rows.size())) {
            throw ParseError(ctx + ": non-contiguous step " + std::to_string(step) +
                             " for sample " + std::to_string(sample_id));
        }
        std::array<double, kChannelCount> row{};
        for (int c = 0; c < kChannelCount; ++c) {
            const double v = parse_double(fields[static_cast<std::size_t>(5 + c)], ctx);
            if (!std::isfinite(v)) {
                throw ParseError(ctx + ": non-finite value in column c" + std::to_string(c));
            }
            row[static_cast<std::size_t>(c)] = v;
        }
        rs.rows.push_back(row);
    }
    if (order.empty()) {
        throw ParseError("load_csv: no samples in " + path.string());
    }

    // Contiguous class indices in sorted class-name order.
    std::set<std::string> names;
    for (const auto& [id, rs] : raw) {
        names.insert(rs.label);
    }
    Dataset dataset;
    dataset.class_names.assign(names.begin(), names.end());
    dataset.class_count = static_cast<int>(dataset.class_names.size());
    std::map<std::string, int> label_index;
    for (int i = 0; i < dataset.class_count; ++i) {
        label_index[dataset.class_names[static_cast<std::size_t>(i)]] = i;
    }

    for (long id : order) {
        const RawSample& rs = raw[id];
        Matrix values(rs.rows.size(), kChannelCount);
        for (std::size_t t = 0; t < rs.rows.size(); ++t) {
            for (int c = 0; c < kChannelCount; ++c) {
                values(t, static_cast<std::size_t>(c)) = rs.rows[t][static_cast<std::size_t>(c)];
            }
        }
        MultivariateTimeSeries sample;
        sample.values = resample_linear(values, static_cast<std::size_t>(target_steps));
        sample.label = label_index[rs.label];
        sample.writer_id = rs.writer_id;
        sample.hand = rs.hand;
        sample.sample_id = static_cast<int>(id);
        dataset.samples.push_back(std::move(sample));
    }
    return dataset;
}

FoldSplit split(const Dataset& dataset, SplitMode mode, int fold_count, std::uint64_t seed) {
    if (fold_count < 2) {
        throw std::invalid_argument("split: fold_count must be at least 2");
    }
    if (dataset.samples.empty()) {
        throw std::invalid_argument("split: empty dataset");
    }
    FoldSplit result;
    result.mode = mode;
    result.fold_count = fold_count;
    result.folds.resize(static_cast<std::size_t>(fold_count));
    const RngStream root(seed);

    if (mode == SplitMode::WriterDependent) {
        // Stratified by label: shuffle each class, deal round-robin.
        std::vector<std::vector<std::size_t>> fold_members(static_cast<std::size_t>(fold_count));
        for (int c = 0; c < dataset.class_count; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
                if (dataset.samples[i].label == c) {
                    members.push_back(i);
                }
            }
            RngStream stream = root.split(static_cast<std::uint64_t>(c));
            stream.shuffle(members);
            for (std::size_t i = 0; i < members.size(); ++i) {
                fold_members[i % static_cast<std::size_t>(fold_count)].push_back(members[i]);
            }
        }
        for (int f = 0; f < fold_count; ++f) {
            auto& fold = result.folds[static_cast<std::size_t>(f)];
            fold.test = fold_members[static_cast<std::size_t>(f)];
            std::sort(fold.test.begin(), fold.test.end());
            for (int g = 0; g < fold_count; ++g) {
                if (g == f) continue;
                fold.train.insert(fold.train.end(),
                                  fold_members[static_cast<std::size_t>(g)].begin(),
                                  fold_members[static_cast<std::size_t>(g)].end());
            }
            std::sort(fold.train.begin(), fold.train.end());
        }
    } else {
        std::set<int> writer_set;
        for (const auto& s : dataset.samples) {
            writer_set.insert(s.writer_id);
        }
        if (static_cast<int>(writer_set.size()) < fold_count) {
            throw std::invalid_argument("split: writer-independent split needs at least " +
                                        std::to_string(fold_count) + " distinct writers, got " +
                                        std::to_string(writer_set.size()));
        }
        std::vector<int> writers(writer_set.begin(), writer_set.end());
        RngStream stream = root.split(0);
        stream.shuffle(writers);
        std::vector<std::set<int>> fold_writers(static_cast<std::size_t>(fold_count));
        for (std::size_t i = 0; i < writers.size(); ++i) {
            fold_writers[i % static_cast<std::size_t>(fold_count)].insert(writers[i]);
        }
        for (int f = 0; f < fold_count; ++f) {
            auto& fold = result.folds[static_cast<std::size_t>(f)];
            const auto& test_writers = fold_writers[static_cast<std::size_t>(f)];
            for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
                if (test_writers.count(dataset.samples[i].writer_id)) {
                    fold.test.push_back(i);
                } else {
                    fold.train.push_back(i);
                }
            }
        }
    }
    return result;
}

void save_split(const FoldSplit& fold_split, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["mode"] = fold_split.mode == SplitMode::WriterDependent ? "WD" : "WI";
    doc["folds"] = nlohmann::json::array();
    for (const auto& fold : fold_split.folds) {
        nlohmann::json f;
        f["train"] = fold.train;
        f["test"] = fold.test;
        doc["folds"].push_back(f);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_split: cannot open " + path.string());
    }
    out << doc.dump(2) << "\n";
}

FoldSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("load_split: cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_split: " + path.string() + ": " + e.what());
    }
    FoldSplit result;
    try {
        const std::string mode = doc.at("mode").get<std::string>();
        if (mode == "WD") {
            result.mode = SplitMode::WriterDependent;
        } else if (mode == "WI") {
            result.mode = SplitMode::WriterIndependent;
        } else {
            throw ParseError("load_split: unknown mode '" + mode + "'");
        }
        for (const auto& f : doc.at("folds")) {
            FoldIndices fold;
            fold.train = f.at("train").get<std::vector<std::size_t>>();
            fold.test = f.at("test").get<std::vector<std::size_t>>();
            result.folds.push_back(std::move(fold));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_split: " + path.string() + ": " + e.what());
    }
    result.fold_count = static_cast<int>(result.folds.size());
    return result;
}

Dataset filter_by_hand(const Dataset& dataset, Hand hand, std::vector<int>* empty_classes) {
    Dataset out;
    out.class_count = dataset.class_count;
    out.class_names = dataset.class_names;
    for (const auto& s : dataset.samples) {
        if (s.hand == hand) {
            out.samples.push_back(s);
        }
    }
    std::vector<int> counts(static_cast<std::size_t>(dataset.class_count), 0);
    for (const auto& s : out.samples) {
        ++counts[static_cast<std::size_t>(s.label)];
    }
    std::vector<int> empty;
    for (int c = 0; c < dataset.class_count; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            empty.push_back(c);
        }
    }
    if (!empty.empty()) {
        if (empty_classes != nullptr) {
            *empty_classes = empty;
        } else {
            std::cerr << "warning: filter_by_hand left classes empty:";
            for (int c : empty) {
                std::cerr << ' ' << dataset.class_names[static_cast<std::size_t>(c)];
            }
            std::cerr << '\n';
        }
    } else if (empty_classes != nullptr) {
        empty_classes->clear();
    }
    return out;
}

std::string hand_token(Hand hand) {
    return hand == Hand::Right ? "R" : "L";
}

} // namespace uqpen
