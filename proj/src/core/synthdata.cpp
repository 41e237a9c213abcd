#include "core/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace m2d2 {

namespace fs = std::filesystem;

Tensor DatasetSplit::ehr_row(std::size_t i) const {
    std::size_t t = x_ehr.extent(1), d = x_ehr.extent(2);
    Tensor out(Shape{t, d});
    const double* src = x_ehr.data() + i * t * d;
    for (std::size_t j = 0; j < t * d; ++j) out[j] = src[j];
    return out;
}

Tensor DatasetSplit::cxr_row(std::size_t i) const {
    std::size_t c = x_cxr.extent(1), h = x_cxr.extent(2), w = x_cxr.extent(3);
    Tensor out(Shape{c, h, w});
    const double* src = x_cxr.data() + i * c * h * w;
    for (std::size_t j = 0; j < c * h * w; ++j) out[j] = src[j];
    return out;
}

const DatasetSplit& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    if (name == "shifted") return shifted;
    fail(ErrorKind::invalid_argument,
         "unknown split \"" + name + "\" (expected train, val, test, or shifted)");
}

void SynthSpec::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v < 1) fail(ErrorKind::config, std::string("data.") + name + " must be >= 1");
    };
    positive(n_train, "n_train");
    positive(n_val, "n_val");
    positive(n_test, "n_test");
    positive(n_shifted, "n_shifted");
    positive(T, "T");
    positive(d, "d");
    if (T < 2) fail(ErrorKind::config, "data.T must be >= 2");
    if (img_side < 8) fail(ErrorKind::config, "data.img_side must be >= 8");
    if (Q < 2) fail(ErrorKind::config, "data.Q must be >= 2");
    if (label_signal_strength < 0.0)
        fail(ErrorKind::config, "data.label_signal_strength must be >= 0");
}

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

struct PatternBank {
    // per (label, channel) sinusoid parameters
    std::vector<double> amp, freq, phase;
    // per-label image blob centers
    std::vector<double> row, col;
    std::vector<double> ts_gain, img_gain;
};

PatternBank make_bank(const SynthSpec& spec) {
    Rng rng(spec.seed, 9001);
    PatternBank bank;
    bank.amp.resize(spec.Q * spec.d);
    bank.freq.resize(spec.Q * spec.d);
    bank.phase.resize(spec.Q * spec.d);
    for (std::size_t i = 0; i < spec.Q * spec.d; ++i) {
        bank.amp[i] = rng.uniform(0.5, 1.5);
        bank.freq[i] = static_cast<double>(1 + rng.index(4));
        bank.phase[i] = rng.uniform(0.0, kTau);
    }
    double side = static_cast<double>(spec.img_side);
    for (std::size_t k = 0; k < spec.Q; ++k) {
        bank.row.push_back(rng.uniform(0.25 * side, 0.75 * side));
        bank.col.push_back(rng.uniform(0.25 * side, 0.75 * side));
        // each modality carries every label, at complementary strengths
        bank.ts_gain.push_back(k < spec.Q / 2 ? 1.0 : 0.45);
        bank.img_gain.push_back(k < spec.Q / 2 ? 0.45 : 1.0);
    }
    return bank;
}

void fill_sample(const SynthSpec& spec, const PatternBank& bank, std::size_t global_index,
                 bool shifted, double* ehr, double* cxr, double* labels) {
    Rng rng(spec.seed, 100000 + global_index);
    std::vector<double> z(spec.Q);
    for (std::size_t k = 0; k < spec.Q; ++k) {
        z[k] = rng.normal();
        labels[k] = z[k] > spec.prevalence_bias ? 1.0 : 0.0;
    }

    double strength = spec.label_signal_strength;
    for (std::size_t t = 0; t < spec.T; ++t)
        for (std::size_t c = 0; c < spec.d; ++c) {
            double v = 0.0;
            for (std::size_t k = 0; k < spec.Q; ++k) {
                std::size_t p = k * spec.d + c;
                v += bank.ts_gain[k] * z[k] * bank.amp[p] *
                     std::sin(kTau * bank.freq[p] * static_cast<double>(t) /
                                  static_cast<double>(spec.T) +
                              bank.phase[p]);
            }
            ehr[t * spec.d + c] = strength * v + 0.3 * rng.normal();
        }

    double sigma_b = static_cast<double>(spec.img_side) / 5.0;
    std::size_t side = spec.img_side;
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
            double v = 0.5;
            for (std::size_t k = 0; k < spec.Q; ++k) {
                double dr = static_cast<double>(r) - bank.row[k];
                double dc = static_cast<double>(c) - bank.col[k];
                v += strength * bank.img_gain[k] * z[k] * 0.3 *
                     std::exp(-(dr * dr + dc * dc) / (2.0 * sigma_b * sigma_b));
            }
            v += 0.08 * rng.normal();
            cxr[r * side + c] = std::min(1.0, std::max(0.0, v));
        }

    if (shifted) {
        // held-out shift transforms, disjoint from the context suite:
        // time-series amplitude rescale and image 90-degree rotation
        for (std::size_t i = 0; i < spec.T * spec.d; ++i) ehr[i] *= 1.6;
        std::vector<double> rotated(side * side);
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c)
                rotated[r * side + c] = cxr[(side - 1 - c) * side + r];
        std::memcpy(cxr, rotated.data(), sizeof(double) * side * side);
    }
}

DatasetSplit make_split(const SynthSpec& spec, const PatternBank& bank, std::size_t n,
                        std::size_t index_base, bool shifted) {
    DatasetSplit split;
    split.x_ehr = Tensor(Shape{n, spec.T, spec.d});
    split.x_cxr = Tensor(Shape{n, 1, spec.img_side, spec.img_side});
    split.labels = Tensor(Shape{n, spec.Q});
    std::size_t ehr_stride = spec.T * spec.d;
    std::size_t cxr_stride = spec.img_side * spec.img_side;
    for (std::size_t i = 0; i < n; ++i)
        fill_sample(spec, bank, index_base + i, shifted, split.x_ehr.data() + i * ehr_stride,
                    split.x_cxr.data() + i * cxr_stride, split.labels.data() + i * spec.Q);
    return split;
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
    spec.validate();
    PatternBank bank = make_bank(spec);
    Dataset data;
    std::size_t base = 0;
    data.train = make_split(spec, bank, spec.n_train, base, false);
    base += spec.n_train;
    data.val = make_split(spec, bank, spec.n_val, base, false);
    base += spec.n_val;
    data.test = make_split(spec, bank, spec.n_test, base, false);
    base += spec.n_test;
    data.shifted = make_split(spec, bank, spec.n_shifted, base, true);
    return data;
}

// --- tensor container ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', '2', 'D', '2', 'T', 'N', 'S', 'R'};
constexpr std::uint8_t kVersion = 1;

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

std::string encode_tensor(const Tensor& t, TensorDType dtype) {
    std::string buf;
    buf.append(kMagic, 8);
    buf.push_back(static_cast<char>(kVersion));
    buf.push_back(static_cast<char>(dtype));
    buf.push_back(static_cast<char>(t.ndim()));
    buf.push_back(0);  // reserved
    for (std::size_t e : t.shape()) put_u64(buf, e);
    switch (dtype) {
        case TensorDType::f64:
            for (std::size_t i = 0; i < t.numel(); ++i) put_f64(buf, t[i]);
            break;
        case TensorDType::f32:
            for (std::size_t i = 0; i < t.numel(); ++i) {
                float f = static_cast<float>(t[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                for (int b = 0; b < 4; ++b)
                    buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
            }
            break;
        case TensorDType::u8:
            for (std::size_t i = 0; i < t.numel(); ++i) {
                double v = t[i];
                if (v < 0.0 || v > 255.0 || v != std::floor(v))
                    fail(ErrorKind::invalid_argument,
                         "value " + std::to_string(v) + " not representable as u8");
                buf.push_back(static_cast<char>(static_cast<unsigned char>(v)));
            }
            break;
        default:
            fail(ErrorKind::invalid_argument, "unknown tensor dtype");
    }
    return buf;
}

std::size_t dtype_size(std::uint8_t dtype) {
    switch (dtype) {
        case 0: return 4;
        case 1: return 8;
        case 2: return 1;
        default: fail(ErrorKind::format, "tensor file field dtype: unknown value " +
                                             std::to_string(dtype));
    }
}

// Decodes one tensor record starting at data[off]; advances off.
Tensor decode_tensor(const std::string& data, std::size_t& off, const std::string& what) {
    auto need = [&](std::size_t bytes, const char* field) {
        if (off + bytes > data.size())
            fail(ErrorKind::format, what + " truncated in field " + field);
    };
    need(12, "header");
    if (std::memcmp(data.data() + off, kMagic, 8) != 0)
        fail(ErrorKind::format, what + " field magic: expected M2D2TNSR");
    off += 8;
    std::uint8_t version = static_cast<unsigned char>(data[off++]);
    if (version != kVersion)
        fail(ErrorKind::format,
             what + " field version: got " + std::to_string(version) + ", expected 1");
    std::uint8_t dtype = static_cast<unsigned char>(data[off++]);
    std::size_t elem = dtype_size(dtype);
    std::uint8_t ndim = static_cast<unsigned char>(data[off++]);
    ++off;  // reserved
    need(8 * static_cast<std::size_t>(ndim), "dims");
    Shape shape(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64(data.data() + off));
        off += 8;
    }
    std::size_t count = Tensor::count(shape);
    need(count * elem, "payload");
    Tensor t(shape);
    const char* p = data.data() + off;
    switch (dtype) {
        case 1:
            for (std::size_t i = 0; i < count; ++i) {
                std::uint64_t bits = get_u64(p + 8 * i);
                double v;
                std::memcpy(&v, &bits, 8);
                t[i] = v;
            }
            break;
        case 0:
            for (std::size_t i = 0; i < count; ++i) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b)
                    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[4 * i + b]))
                            << (8 * b);
                float f;
                std::memcpy(&f, &bits, 4);
                t[i] = static_cast<double>(f);
            }
            break;
        case 2:
            for (std::size_t i = 0; i < count; ++i)
                t[i] = static_cast<double>(static_cast<unsigned char>(p[i]));
            break;
    }
    off += count * elem;
    return t;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorKind::io, "short write to " + path);
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t, TensorDType dtype) {
    write_file(path, encode_tensor(t, dtype));
}

Tensor read_tensor(const std::string& path) {
    std::string data = read_file(path);
    std::size_t off = 0;
    Tensor t = decode_tensor(data, off, path);
    if (off != data.size())
        fail(ErrorKind::format, path + " field payload: " + std::to_string(data.size() - off) +
                                    " trailing bytes");
    return t;
}

void write_named_tensors(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::string buf;
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff)
            fail(ErrorKind::invalid_argument, "tensor name too long: " + name);
        buf.push_back(static_cast<char>(name.size() & 0xff));
        buf.push_back(static_cast<char>((name.size() >> 8) & 0xff));
        buf.append(name);
        buf.append(encode_tensor(t, TensorDType::f64));
    }
    write_file(path, buf);
}

std::map<std::string, Tensor> read_named_tensors(const std::string& path) {
    std::string data = read_file(path);
    std::map<std::string, Tensor> out;
    std::size_t off = 0;
    while (off < data.size()) {
        if (off + 2 > data.size()) fail(ErrorKind::format, path + " truncated in field name length");
        std::size_t len = static_cast<unsigned char>(data[off]) |
                          (static_cast<std::size_t>(static_cast<unsigned char>(data[off + 1])) << 8);
        off += 2;
        if (off + len > data.size()) fail(ErrorKind::format, path + " truncated in field name");
        std::string name = data.substr(off, len);
        off += len;
        out[name] = decode_tensor(data, off, path + ":" + name);
    }
    return out;
}

// --- dataset directory ----------------------------------------------------------

namespace {

const char* kSplitNames[4] = {"train", "val", "test", "shifted"};

DatasetSplit* split_by_name(Dataset& d, const std::string& name) {
    if (name == "train") return &d.train;
    if (name == "val") return &d.val;
    if (name == "test") return &d.test;
    if (name == "shifted") return &d.shifted;
    return nullptr;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& data) {
    fs::create_directories(dir);
    std::string manifest;
    for (const char* name : kSplitNames) {
        const DatasetSplit& split = data.split(name);
        fs::create_directories(fs::path(dir) / name);
        std::string ehr = std::string(name) + "/ehr.m2t";
        std::string cxr = std::string(name) + "/cxr.m2t";
        std::string labels = std::string(name) + "/labels.m2t";
        write_tensor((fs::path(dir) / ehr).string(), split.x_ehr);
        write_tensor((fs::path(dir) / cxr).string(), split.x_cxr);
        write_tensor((fs::path(dir) / labels).string(), split.labels);
        manifest += std::string(name) + " " + ehr + " " + cxr + " " + labels + "\n";
    }
    write_file((fs::path(dir) / "manifest.txt").string(), manifest);
}

Dataset load_dataset(const std::string& dir) {
    std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    std::ifstream in(manifest_path);
    if (!in) fail(ErrorKind::io, "cannot open dataset manifest " + manifest_path);
    Dataset data;
    std::string line;
    int seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string name, ehr, cxr, labels;
        if (!(row >> name >> ehr >> cxr >> labels))
            fail(ErrorKind::format, manifest_path + ": malformed line \"" + line + "\"");
        DatasetSplit* split = split_by_name(data, name);
        if (!split) fail(ErrorKind::format, manifest_path + ": unknown split \"" + name + "\"");
        split->x_ehr = read_tensor((fs::path(dir) / ehr).string());
        split->x_cxr = read_tensor((fs::path(dir) / cxr).string());
        split->labels = read_tensor((fs::path(dir) / labels).string());
        ++seen;
    }
    if (seen != 4)
        fail(ErrorKind::format, manifest_path + ": expected 4 splits, found " +
                                    std::to_string(seen));
    return data;
}

}  // namespace m2d2
