#include "protomark/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "protomark/errors.hpp"
#include "protomark/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace protomark {

namespace {

const std::set<std::string> kTopLevelKeys = {"version", "num_landmarks", "samples"};
const std::set<std::string> kSampleKeys = {"id", "image", "group", "spacing_mm_per_px",
                                           "landmarks"};

json parse_annotations(const std::string& root) {
    const fs::path path = fs::path(root) / "annotations.json";
    std::ifstream in(path);
    if (!in) throw IoError("missing annotations file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("annotations.json parse error: " + std::string(e.what()));
    }
    return doc;
}

} // namespace

Dataset load_dataset(const std::string& root_path) {
    const json doc = parse_annotations(root_path);
    if (!doc.is_object()) throw ValidationError("annotations.json: top level must be an object");
    for (const auto& item : doc.items()) {
        if (!kTopLevelKeys.count(item.key()))
            throw ValidationError("annotations.json: unknown top-level key '" + item.key() + "'");
    }
    for (const auto& key : kTopLevelKeys) {
        if (!doc.contains(key))
            throw ValidationError("annotations.json: missing required key '" + key + "'");
    }
    if (!doc["version"].is_number_integer() || doc["version"].get<int>() != 1)
        throw ValidationError("annotations.json: field 'version' must be the integer 1");
    if (!doc["num_landmarks"].is_number_integer() || doc["num_landmarks"].get<int>() < 1)
        throw ValidationError("annotations.json: field 'num_landmarks' must be a positive integer");
    if (!doc["samples"].is_array())
        throw ValidationError("annotations.json: field 'samples' must be an array");

    Dataset ds;
    ds.num_landmarks = doc["num_landmarks"].get<int>();
    std::unordered_set<std::string> seen_ids;

    for (const auto& js : doc["samples"]) {
        if (!js.is_object()) throw ValidationError("annotations.json: sample entries must be objects");
        for (const auto& item : js.items()) {
            if (!kSampleKeys.count(item.key()))
                throw ValidationError("annotations.json: unknown sample key '" + item.key() + "'");
        }
        for (const auto& key : kSampleKeys) {
            if (!js.contains(key))
                throw ValidationError("annotations.json: sample missing required key '" + key + "'");
        }
        Sample s;
        if (!js["id"].is_string()) throw ValidationError("sample field 'id' must be a string");
        s.id = js["id"].get<std::string>();
        if (!seen_ids.insert(s.id).second)
            throw ValidationError("duplicate sample id '" + s.id + "'");
        if (!js["image"].is_string())
            throw ValidationError("sample '" + s.id + "': field 'image' must be a string");
        if (!js["group"].is_string())
            throw ValidationError("sample '" + s.id + "': field 'group' must be a string");
        s.landmarks.group = group_from_name(js["group"].get<std::string>());
        if (!js["spacing_mm_per_px"].is_number() || js["spacing_mm_per_px"].get<double>() <= 0.0)
            throw ValidationError("sample '" + s.id + "': field 'spacing_mm_per_px' must be > 0");
        s.landmarks.spacing_mm_per_px = js["spacing_mm_per_px"].get<double>();

        const auto& lms = js["landmarks"];
        if (!lms.is_array() || static_cast<int>(lms.size()) != ds.num_landmarks)
            throw ValidationError("sample '" + s.id + "': field 'landmarks' must hold exactly " +
                                  std::to_string(ds.num_landmarks) + " entries, got " +
                                  std::to_string(lms.size()));
        for (const auto& pt : lms) {
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
                throw ValidationError("sample '" + s.id + "': landmarks must be [x, y] pairs");
            s.landmarks.coords.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }

        const fs::path img_path = fs::path(root_path) / js["image"].get<std::string>();
        if (!fs::exists(img_path)) throw IoError("missing image file: " + img_path.string());
        s.image = read_png_gray(img_path.string());
        s.image.validate("sample '" + s.id + "'");
        s.landmarks.validate(s.image.height, s.image.width, "sample '" + s.id + "'");
        s.resize.native_h = s.image.height;
        s.resize.native_w = s.image.width;
        s.resize.native_spacing_mm_per_px = s.landmarks.spacing_mm_per_px;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Sample resize_sample(const Sample& s, int target_h, int target_w) {
    Sample out = s;
    if (s.image.height == target_h && s.image.width == target_w) return out;
    const double sx = static_cast<double>(target_w - 1) / (s.image.width - 1);
    const double sy = static_cast<double>(target_h - 1) / (s.image.height - 1);
    out.image = resize_bilinear(s.image, target_h, target_w);
    for (auto& p : out.landmarks.coords) {
        p.x *= sx;
        p.y *= sy;
    }
    out.resize.resized = true;
    out.resize.native_h = s.image.height;
    out.resize.native_w = s.image.width;
    out.resize.scale_x = sx;
    out.resize.scale_y = sy;
    out.resize.native_spacing_mm_per_px = s.landmarks.spacing_mm_per_px;
    out.resize.spacing_approximated = sx != sy;
    out.landmarks.spacing_mm_per_px = s.landmarks.spacing_mm_per_px / (0.5 * (sx + sy));
    return out;
}

Point to_native_coords(const Point& working, const ResizeInfo& info, int working_h, int working_w) {
    if (!info.resized) return working;
    return {working.x * static_cast<double>(info.native_w - 1) / (working_w - 1),
            working.y * static_cast<double>(info.native_h - 1) / (working_h - 1)};
}

Dataset load_dataset(const std::string& root_path, int target_h, int target_w) {
    Dataset ds = load_dataset(root_path);
    for (auto& s : ds.samples) s = resize_sample(s, target_h, target_w);
    return ds;
}

void save_corpus(const Dataset& d, const std::string& root_path, int bit_depth) {
    std::error_code ec;
    fs::create_directories(fs::path(root_path) / "images", ec);
    if (ec) throw IoError("cannot create corpus directory: " + root_path + " (" + ec.message() + ")");

    json doc;
    doc["version"] = 1;
    doc["num_landmarks"] = d.num_landmarks;
    doc["samples"] = json::array();
    for (const auto& s : d.samples) {
        const std::string rel = "images/" + s.id + ".png";
        write_png_gray((fs::path(root_path) / rel).string(), s.image, bit_depth);
        json js;
        js["id"] = s.id;
        js["image"] = rel;
        js["group"] = group_name(s.landmarks.group);
        js["spacing_mm_per_px"] = s.landmarks.spacing_mm_per_px;
        json lms = json::array();
        for (const auto& p : s.landmarks.coords) lms.push_back({p.x, p.y});
        js["landmarks"] = std::move(lms);
        doc["samples"].push_back(std::move(js));
    }
    std::ofstream out(fs::path(root_path) / "annotations.json");
    if (!out) throw IoError("cannot write annotations.json under " + root_path);
    out << doc.dump(2) << "\n";
}

std::array<Dataset, 3> split_dataset(const Dataset& d, const std::array<double, 3>& fractions,
                                     std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw ConfigError("split fractions must be >= 0");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

    std::array<Dataset, 3> out;
    for (auto& ds : out) ds.num_landmarks = d.num_landmarks;

    Rng rng(seed);
    for (Group g : {Group::adult, Group::adolescent}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d.samples.size(); ++i)
            if (d.samples[i].landmarks.group == g) idx.push_back(i);
        if (idx.empty()) continue;
        rng.shuffle(idx);

        // Largest-remainder apportionment keeps each split within one sample
        // of the requested fraction.
        const auto n = static_cast<double>(idx.size());
        std::array<std::size_t, 3> counts{};
        std::array<std::pair<double, int>, 3> rema{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double want = fractions[static_cast<std::size_t>(s)] * n;
            counts[static_cast<std::size_t>(s)] = static_cast<std::size_t>(std::floor(want));
            rema[static_cast<std::size_t>(s)] = {want - std::floor(want), s};
            assigned += counts[static_cast<std::size_t>(s)];
        }
        std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < idx.size(); ++r, ++assigned)
            ++counts[static_cast<std::size_t>(rema[r % 3].second)];

        for (int s = 0; s < 3; ++s) {
            if (counts[static_cast<std::size_t>(s)] == 0)
                throw ConfigError(std::string("split leaves no '") + group_name(g) +
                                  "' samples in split " + std::to_string(s) +
                                  " at the given fractions");
        }
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t c = 0; c < counts[static_cast<std::size_t>(s)]; ++c)
                out[static_cast<std::size_t>(s)].samples.push_back(d.samples[idx[pos++]]);
        }
    }
    return out;
}

} // namespace protomark
