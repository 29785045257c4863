#include "ocsq/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ocsq/error.hpp"

namespace ocsq {

using nlohmann::json;

namespace {

// --- byte helpers --------------------------------------------------------------

void put_f32(std::vector<std::byte>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xffu));
}

void put_f64(std::vector<std::byte>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xffu));
}

double get_f32(const std::byte* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

double get_f64(const std::byte* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

// --- checked JSON access -------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw FormatError(path + ": " + what); }

const json& field(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "/" + key, "missing");
  return *it;
}

std::size_t as_size(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(path, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

Shape as_shape(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of dimensions");
  Shape s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto d = as_size(v[i], path + "/" + std::to_string(i));
    if (d == 0) fail(path + "/" + std::to_string(i), "dimension must be positive");
    s.push_back(d);
  }
  return s;
}

json parse_metadata(const std::string& text) {
  json m;
  try {
    m = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("metadata is not valid JSON: ") + e.what());
  }
  if (!m.is_object()) throw Error("metadata must be a JSON object");
  return m;
}

// --- container -----------------------------------------------------------------

struct RawContainer {
  json header;
  std::map<std::string, StoredTensor> tensors;
};

RawContainer parse_container(std::span<const std::byte> bytes) {
  const auto* begin = reinterpret_cast<const char*>(bytes.data());
  const void* nul = std::memchr(begin, 0, bytes.size());
  if (nul == nullptr) throw FormatError("header is not NUL-terminated");
  const auto header_len = static_cast<std::size_t>(static_cast<const char*>(nul) - begin);

  RawContainer c;
  try {
    c.header = json::parse(std::string_view(begin, header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what());
  }
  if (!c.header.is_object()) fail("", "header must be a JSON object");
  const auto version = as_int(field(c.header, "", "format_version"), "/format_version");
  if (version != kFormatVersion) fail("/format_version", "unsupported version " + std::to_string(version));

  const auto blob = bytes.subspan(header_len + 1);
  const json& table = field(c.header, "", "tensors");
  if (!table.is_object()) fail("/tensors", "expected an object");
  for (const auto& [name, entry] : table.items()) {
    const std::string path = "/tensors/" + name;
    const Shape shape = as_shape(field(entry, path, "shape"), path + "/shape");
    const auto offset = as_size(field(entry, path, "offset"), path + "/offset");
    const auto length = as_size(field(entry, path, "length"), path + "/length");
    Dtype dtype = Dtype::f32;
    if (auto it = entry.find("dtype"); it != entry.end()) {
      const auto d = as_string(*it, path + "/dtype");
      if (d == "f64") {
        dtype = Dtype::f64;
      } else if (d != "f32") {
        fail(path + "/dtype", "unknown dtype '" + d + "'");
      }
    }
    const auto n = shape_numel(shape);
    if (length != n * dtype_size(dtype)) {
      throw FormatError("tensor '" + name + "': length " + std::to_string(length) + " does not match shape " +
                        shape_to_string(shape));
    }
    if (offset > blob.size() || length > blob.size() - offset) {
      throw FormatError("tensor '" + name + "': offset " + std::to_string(offset) + " + length " +
                        std::to_string(length) + " exceeds blob of " + std::to_string(blob.size()) + " bytes");
    }
    std::vector<double> data(n);
    const std::byte* p = blob.data() + offset;
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = dtype == Dtype::f32 ? get_f32(p + 4 * i) : get_f64(p + 8 * i);
      if (!std::isfinite(data[i])) throw FormatError("tensor '" + name + "': non-finite value");
    }
    c.tensors.emplace(name, StoredTensor{Tensor(shape, std::move(data)), dtype});
  }
  return c;
}

std::vector<std::byte> serialize_container(json header, const std::map<std::string, StoredTensor>& tensors) {
  std::vector<std::byte> blob;
  json table = json::object();
  for (const auto& [name, st] : tensors) {
    json entry;
    entry["shape"] = st.value.shape();
    entry["offset"] = blob.size();
    entry["length"] = st.value.size() * dtype_size(st.dtype);
    if (st.dtype == Dtype::f64) entry["dtype"] = "f64";
    for (double v : st.value.values()) st.dtype == Dtype::f32 ? put_f32(blob, v) : put_f64(blob, v);
    table[name] = std::move(entry);
  }
  header["format_version"] = kFormatVersion;
  header["tensors"] = std::move(table);
  const std::string text = header.dump();
  std::vector<std::byte> out(text.size() + 1 + blob.size());
  std::memcpy(out.data(), text.data(), text.size());
  out[text.size()] = std::byte{0};
  std::memcpy(out.data() + text.size() + 1, blob.data(), blob.size());
  return out;
}

const Tensor& tensor_ref(const RawContainer& c, const json& layer, const std::string& path, const char* key) {
  const std::string name = as_string(field(layer, path, key), path + "/" + key);
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) fail(path + "/" + key, "unknown tensor '" + name + "'");
  return it->second.value;
}

void expect_rank(const Tensor& t, std::size_t rank, const std::string& path) {
  if (t.rank() != rank) fail(path, "expected rank " + std::to_string(rank) + ", got " + shape_to_string(t.shape()));
}

Layer parse_layer(const RawContainer& c, const json& j, std::size_t index) {
  const std::string path = "/layers/" + std::to_string(index);
  Layer l;
  l.id = j.contains("id") ? as_int(j["id"], path + "/id") : static_cast<int>(index);
  if (j.contains("name")) l.name = as_string(j["name"], path + "/name");
  const std::string type = as_string(field(j, path, "type"), path + "/type");

  auto weighted_extras = [&](const Tensor& w) {
    if (auto it = j.find("weight_splits"); it != j.end()) {
      if (!it->is_array()) fail(path + "/weight_splits", "expected an array");
      for (std::size_t k = 0; k < it->size(); ++k) {
        const auto p = path + "/weight_splits/" + std::to_string(k);
        const json& pair = (*it)[k];
        if (!pair.is_array() || pair.size() != 2) fail(p, "expected [source, created]");
        l.weight_splits.push_back({as_size(pair[0], p + "/0"), as_size(pair[1], p + "/1")});
      }
    }
    if (auto it = j.find("duplicated_outputs"); it != j.end()) {
      l.duplicated_outputs = as_size(*it, path + "/duplicated_outputs");
      if (l.duplicated_outputs >= w.dim(0)) fail(path + "/duplicated_outputs", "exceeds output channels");
    }
  };
  auto bias_for = [&](std::size_t out) {
    if (!j.contains("bias")) return Tensor::zeros({out});
    const Tensor& b = tensor_ref(c, j, path, "bias");
    if (b.shape() != Shape{out}) fail(path + "/bias", "expected shape [" + std::to_string(out) + "]");
    return b;
  };

  if (type == "fc") {
    FullyConnected fc;
    fc.weight = tensor_ref(c, j, path, "weight");
    expect_rank(fc.weight, 2, path + "/weight");
    fc.bias = bias_for(fc.weight.dim(0));
    weighted_extras(fc.weight);
    l.op = std::move(fc);
  } else if (type == "conv2d") {
    Conv2D cv;
    cv.weight = tensor_ref(c, j, path, "weight");
    expect_rank(cv.weight, 4, path + "/weight");
    cv.bias = bias_for(cv.weight.dim(0));
    cv.stride = j.contains("stride") ? as_size(j["stride"], path + "/stride") : 1;
    cv.pad = j.contains("pad") ? as_size(j["pad"], path + "/pad") : 0;
    if (cv.stride == 0) fail(path + "/stride", "must be positive");
    weighted_extras(cv.weight);
    l.op = std::move(cv);
  } else if (type == "batchnorm") {
    BatchNorm bn{tensor_ref(c, j, path, "scale"), tensor_ref(c, j, path, "shift")};
    expect_rank(bn.scale, 1, path + "/scale");
    if (bn.shift.shape() != bn.scale.shape()) fail(path + "/shift", "shape differs from scale");
    l.op = std::move(bn);
  } else if (type == "relu") {
    l.op = ReLU{};
  } else if (type == "maxpool" || type == "avgpool") {
    const auto k = as_size(field(j, path, "kernel"), path + "/kernel");
    const auto s = j.contains("stride") ? as_size(j["stride"], path + "/stride") : k;
    if (k == 0 || s == 0) fail(path, "pool kernel and stride must be positive");
    if (type == "maxpool") {
      l.op = MaxPool{k, s};
    } else {
      l.op = AvgPool{k, s};
    }
  } else if (type == "flatten") {
    l.op = Flatten{};
  } else if (type == "channel_split") {
    ChannelSplit cs;
    const json& src = field(j, path, "source");
    const json& scale = field(j, path, "scale");
    if (!src.is_array() || !scale.is_array() || src.size() != scale.size() || src.empty()) {
      fail(path, "source and scale must be equal-length non-empty arrays");
    }
    for (std::size_t k = 0; k < src.size(); ++k) {
      cs.source.push_back(as_size(src[k], path + "/source/" + std::to_string(k)));
      if (!scale[k].is_number()) fail(path + "/scale/" + std::to_string(k), "expected a number");
      const double s = scale[k].get<double>();
      if (!(s > 0.0)) fail(path + "/scale/" + std::to_string(k), "scale must be positive");
      cs.scale.push_back(s);
    }
    l.op = std::move(cs);
  } else {
    fail(path + "/type", "unknown layer type '" + type + "'");
  }
  return l;
}

}  // namespace

// --- tensor files ----------------------------------------------------------------

std::vector<std::byte> serialize_tensors(const TensorFile& file) {
  json header;
  header["metadata"] = parse_metadata(file.metadata_json);
  return serialize_container(std::move(header), file.tensors);
}

TensorFile parse_tensors(std::span<const std::byte> bytes) {
  RawContainer c = parse_container(bytes);
  TensorFile f;
  f.tensors = std::move(c.tensors);
  if (auto it = c.header.find("metadata"); it != c.header.end()) f.metadata_json = it->dump();
  return f;
}

void save_tensors(const TensorFile& file, const std::filesystem::path& path) { write_file(path, serialize_tensors(file)); }

TensorFile load_tensors(const std::filesystem::path& path) { return parse_tensors(read_file(path)); }

std::string read_metadata(const std::filesystem::path& path) { return load_tensors(path).metadata_json; }

// --- models ------------------------------------------------------------------------

std::vector<std::byte> serialize_model(const ModelGraph& model, const std::string& metadata_json) {
  json header;
  header["metadata"] = parse_metadata(metadata_json);
  header["input_shape"] = model.input_shape();
  json layers = json::array();
  std::map<std::string, StoredTensor> tensors;
  for (const auto& l : model.layers()) {
    json j;
    j["id"] = l.id;
    j["name"] = l.name;
    j["type"] = std::string(l.kind());
    const std::string prefix = "layer" + std::to_string(l.id) + ".";
    auto put = [&](const char* key, const Tensor& t) {
      tensors[prefix + key] = StoredTensor{t, Dtype::f32};
      j[key] = prefix + key;
    };
    if (l.is_weighted()) {
      put("weight", l.weight());
      put("bias", l.bias());
      if (auto* cv = std::get_if<Conv2D>(&l.op)) {
        j["stride"] = cv->stride;
        j["pad"] = cv->pad;
      }
      if (!l.weight_splits.empty()) {
        json splits = json::array();
        for (const auto& s : l.weight_splits) splits.push_back({s.source, s.created});
        j["weight_splits"] = std::move(splits);
      }
      if (l.duplicated_outputs) j["duplicated_outputs"] = l.duplicated_outputs;
    } else if (auto* bn = std::get_if<BatchNorm>(&l.op)) {
      put("scale", bn->scale);
      put("shift", bn->shift);
    } else if (auto* mp = std::get_if<MaxPool>(&l.op)) {
      j["kernel"] = mp->kernel;
      j["stride"] = mp->stride;
    } else if (auto* ap = std::get_if<AvgPool>(&l.op)) {
      j["kernel"] = ap->kernel;
      j["stride"] = ap->stride;
    } else if (auto* cs = std::get_if<ChannelSplit>(&l.op)) {
      j["source"] = cs->source;
      j["scale"] = cs->scale;
    }
    layers.push_back(std::move(j));
  }
  header["layers"] = std::move(layers);
  return serialize_container(std::move(header), tensors);
}

ModelGraph parse_model(std::span<const std::byte> bytes) {
  const RawContainer c = parse_container(bytes);
  const Shape input = as_shape(field(c.header, "", "input_shape"), "/input_shape");
  const json& layers = field(c.header, "", "layers");
  if (!layers.is_array()) fail("/layers", "expected an array");
  std::vector<Layer> parsed;
  for (std::size_t i = 0; i < layers.size(); ++i) parsed.push_back(parse_layer(c, layers[i], i));
  ModelGraph model(input, std::move(parsed));
  model.infer_shapes();
  return model;
}

void save_model(const ModelGraph& model, const std::filesystem::path& path, const std::string& metadata_json) {
  write_file(path, serialize_model(model, metadata_json));
}

ModelGraph load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

// --- datasets ----------------------------------------------------------------------

std::vector<std::size_t> Dataset::indices(SplitRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (split.empty() ? role == SplitRole::eval : split[i] == role) out.push_back(i);
  }
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  TensorFile f;
  f.metadata_json = data.metadata_json;
  f.tensors["inputs"] = {stack(data.inputs), Dtype::f32};
  if (!data.labels.empty()) {
    std::vector<double> l(data.labels.begin(), data.labels.end());
    f.tensors["labels"] = {Tensor::vector(std::move(l)), Dtype::f32};
  }
  if (!data.split.empty()) {
    std::vector<double> s;
    for (auto r : data.split) s.push_back(static_cast<double>(static_cast<int>(r)));
    f.tensors["split"] = {Tensor::vector(std::move(s)), Dtype::f32};
  }
  save_tensors(f, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  TensorFile f = load_tensors(path);
  Dataset d;
  d.metadata_json = f.metadata_json;
  auto it = f.tensors.find("inputs");
  if (it == f.tensors.end()) throw FormatError("dataset '" + path.string() + "' has no 'inputs' tensor");
  const Tensor& all = it->second.value;
  if (all.rank() < 2) throw FormatError("dataset inputs need a leading sample axis");
  const auto n = all.dim(0);
  for (std::size_t i = 0; i < n; ++i) d.inputs.push_back(unstack_one(all, i));

  auto read_ints = [&](const char* name) {
    std::vector<int> out;
    auto t = f.tensors.find(name);
    if (t == f.tensors.end()) return out;
    if (t->second.value.shape() != Shape{n}) throw FormatError(std::string("dataset tensor '") + name + "' must be [N]");
    for (double v : t->second.value.values()) {
      if (v != std::floor(v) || v < 0) throw FormatError(std::string("dataset tensor '") + name + "' must hold non-negative integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  };
  d.labels = read_ints("labels");
  for (int s : read_ints("split")) {
    if (s > 1) throw FormatError("dataset split labels must be 0 (profile) or 1 (eval)");
    d.split.push_back(static_cast<SplitRole>(s));
  }
  return d;
}

// --- split plans -------------------------------------------------------------------

std::string split_plan_to_json(const SplitPlan& plan) {
  json j;
  j["ratio"] = plan.expand_ratio;
  j["target"] = std::string(to_string(plan.target));
  j["qa"] = plan.qa;
  json recs = json::array();
  for (const auto& r : plan.records) recs.push_back({{"layer", r.layer_id}, {"source", r.source_channel}, {"new", r.new_channel}});
  j["records"] = std::move(recs);
  return j.dump(2);
}

SplitPlan split_plan_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("split plan is not valid JSON: ") + e.what());
  }
  SplitPlan p;
  const json& ratio = field(j, "", "ratio");
  if (!ratio.is_number()) fail("/ratio", "expected a number");
  p.expand_ratio = ratio.get<double>();
  const auto target = as_string(field(j, "", "target"), "/target");
  try {
    p.target = parse_split_target(target);
  } catch (const UsageError&) {
    fail("/target", "unknown target '" + target + "'");
  }
  const json& qa = field(j, "", "qa");
  if (!qa.is_boolean()) fail("/qa", "expected a boolean");
  p.qa = qa.get<bool>();
  const json& recs = field(j, "", "records");
  if (!recs.is_array()) fail("/records", "expected an array");
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string path = "/records/" + std::to_string(i);
    p.records.push_back({as_int(field(recs[i], path, "layer"), path + "/layer"),
                         as_size(field(recs[i], path, "source"), path + "/source"),
                         as_size(field(recs[i], path, "new"), path + "/new")});
  }
  return p;
}

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path) {
  const std::string text = split_plan_to_json(plan) + "\n";
  write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

SplitPlan load_split_plan(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return split_plan_from_json(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// --- reports -------------------------------------------------------------------------

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string format_report(std::span<const ReportRow> rows) {
  std::ostringstream os;
  os << "model,target,bits,clip_method,ocs_ratio,qa,accuracy_or_mse,rel_weight_size,rel_act_size\n";
  for (const auto& r : rows) {
    os << csv_field(r.model) << ',' << csv_field(r.target) << ',' << r.bits << ',' << csv_field(r.clip_method) << ','
       << fmt6(r.ocs_ratio) << ',' << (r.qa ? "true" : "false") << ',' << fmt6(r.accuracy_or_mse) << ','
       << fmt6(r.rel_weight_size) << ',' << fmt6(r.rel_act_size) << '\n';
  }
  return os.str();
}

void save_report(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw Error("report has no rows");
  const std::string text = format_report(rows);
  write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace ocsq
