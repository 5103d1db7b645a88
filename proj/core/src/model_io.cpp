/*
 * Copyright 2026 The lossattr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lossattr/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "lossattr/errors.hpp"

namespace lossattr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts need byte swaps");

constexpr char kMagic[4] = {'L', 'A', 'M', 'F'};
constexpr std::size_t kPreambleSize = 16;  // magic + u32 version + u64 header_len

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t offset) {
  if (offset + sizeof(T) > in.size()) {
    throw ParseError("truncated model file", in.size());
  }
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

// Row-major so the file layout does not depend on Eigen's storage order.
void put_matrix(std::vector<std::uint8_t>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
  }
}

void put_vector(std::vector<std::uint8_t>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(out, v(i));
}

class BlockReader {
 public:
  BlockReader(const std::vector<std::uint8_t>& bytes, std::size_t offset)
      : bytes_(bytes), offset_(offset) {}

  void read_matrix(Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = next();
    }
  }
  template <typename V>
  void read_vector(V& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = next();
  }
  double next() {
    double v = get<double>(bytes_, offset_);
    offset_ += sizeof(double);
    return v;
  }
  std::size_t offset() const { return offset_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_;
};

std::size_t parameter_count(const PredictiveModel& model) {
  std::size_t n = 0;
  for (const auto& l : model.layers()) n += l.weights.size() + l.bias.size();
  return n;
}

std::size_t parameter_count(const LossEstimator& est) {
  std::size_t n = 0;
  for (const auto& p : est.projections()) n += p.weights.size() + p.bias.size();
  return n + est.head_weights().size() + 1;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const PredictiveModel& model,
                                          const LossEstimator* estimator) {
  nlohmann::json header;
  header["schema_version"] = kModelSchemaVersion;
  header["d"] = model.input_dim();
  header["C"] = model.num_classes();
  header["dropout_rate"] = model.dropout_rate();
  header["seeds"] = {{"predictor", model.seed()}};
  nlohmann::json arch = nlohmann::json::array();
  for (const auto& s : model.layer_specs()) {
    arch.push_back({{"fan_in", s.fan_in},
                    {"fan_out", s.fan_out},
                    {"activation", activation_name(s.activation)}});
  }
  header["architecture"] = arch;
  std::size_t count = parameter_count(model);
  if (estimator != nullptr) {
    estimator->check_compatible(model);
    std::vector<int> dims;
    for (std::size_t i = 0; i < estimator->taps().size(); ++i) {
      dims.push_back(estimator->tap_dim(static_cast<int>(i)));
    }
    header["estimator"] = {{"taps", estimator->taps()},
                           {"tap_dims", dims},
                           {"units", estimator->units()}};
    count += parameter_count(*estimator);
  } else {
    header["estimator"] = nullptr;
  }
  header["parameter_count"] = count;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kModelSchemaVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& layer : model.layers()) {
    put_matrix(out, layer.weights);
    put_vector(out, layer.bias);
  }
  if (estimator != nullptr) {
    for (const auto& p : estimator->projections()) {
      put_matrix(out, p.weights);
      put_vector(out, p.bias);
    }
    for (Eigen::Index i = 0; i < estimator->head_weights().size(); ++i) {
      put<double>(out, estimator->head_weights()(i));
    }
    put<double>(out, estimator->head_bias());
  }
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  return out;
}

ModelBundle deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("not a model file (bad magic)", 0);
  }
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kModelSchemaVersion) {
    throw UnsupportedVersionError("unsupported model schema version " +
                                  std::to_string(version) + " (expected " +
                                  std::to_string(kModelSchemaVersion) + ")");
  }
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPreambleSize) {
    throw ParseError("truncated model header", bytes.size());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreambleSize,
                                   bytes.begin() + kPreambleSize +
                                       static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed model header: ") + e.what(),
                     kPreambleSize + e.byte);
  }

  const std::size_t body = kPreambleSize + header_len;
  try {
    std::vector<LayerSpec> specs;
    for (const auto& l : header.at("architecture")) {
      specs.push_back({l.at("fan_in").get<int>(), l.at("fan_out").get<int>(),
                       parse_activation(l.at("activation").get<std::string>())});
    }
    PredictiveModel model(std::move(specs), header.at("dropout_rate").get<double>(),
                          header.at("seeds").at("predictor").get<std::uint64_t>());
    if (model.input_dim() != header.at("d").get<int>() ||
        model.num_classes() != header.at("C").get<int>()) {
      throw ParseError("header d/C disagree with architecture", kPreambleSize);
    }
    std::optional<LossEstimator> estimator;
    if (!header.at("estimator").is_null()) {
      const auto& e = header.at("estimator");
      estimator.emplace(e.at("taps").get<std::vector<int>>(),
                        e.at("tap_dims").get<std::vector<int>>(),
                        e.at("units").get<int>());
      estimator->check_compatible(model);
    }
    std::size_t count = parameter_count(model) + (estimator ? parameter_count(*estimator) : 0);
    if (count != header.at("parameter_count").get<std::size_t>()) {
      throw ParseError("parameter count disagrees with architecture", kPreambleSize);
    }
    const std::size_t expected_size = body + count * sizeof(double) + sizeof(std::uint64_t);
    if (bytes.size() < expected_size) {
      throw ParseError("truncated model file: expected " + std::to_string(expected_size) +
                           " bytes, found " + std::to_string(bytes.size()),
                       bytes.size());
    }
    if (bytes.size() > expected_size) {
      throw ParseError("trailing bytes after model checksum", expected_size);
    }
    const std::size_t checksum_at = expected_size - sizeof(std::uint64_t);
    if (get<std::uint64_t>(bytes, checksum_at) != fnv1a(bytes.data(), checksum_at)) {
      throw ParseError("model checksum mismatch", checksum_at);
    }

    BlockReader reader(bytes, body);
    for (auto& layer : model.mutable_layers()) {
      reader.read_matrix(layer.weights);
      reader.read_vector(layer.bias);
    }
    if (estimator) {
      for (auto& p : estimator->mutable_projections()) {
        reader.read_matrix(p.weights);
        reader.read_vector(p.bias);
      }
      reader.read_vector(estimator->mutable_head_weights());
      estimator->set_head_bias(reader.next());
    }
    return ModelBundle{std::move(model), std::move(estimator)};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model header missing or mistyped field: ") + e.what(),
                     kPreambleSize);
  } catch (const ShapeError& e) {
    throw ParseError(std::string("inconsistent model header: ") + e.what(), kPreambleSize);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("invalid model header: ") + e.what(), kPreambleSize);
  }
}

void save_model(const PredictiveModel& model, const LossEstimator* estimator,
                const std::filesystem::path& path) {
  auto bytes = serialize_model(model, estimator);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace lossattr
