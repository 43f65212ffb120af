#include "kernelsurf/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <nlohmann/json.hpp>

#include "kernelsurf/error.hpp"

namespace kernelsurf {
namespace {

static_assert(std::endian::native == std::endian::little, "model files are little endian");

constexpr char kMagic[4] = {'K', 'S', 'R', 'M'};

class PayloadReader {
 public:
  PayloadReader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  double next() {
    if (pos_ + 4 > bytes_.size()) throw Error(ErrorCode::FormatError, "model payload is truncated");
    float v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return static_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_;
};

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "none") return Activation::none;
  throw Error(ErrorCode::FormatError, "unknown activation '" + name + "'");
}

}  // namespace

KernelModel load_model(const std::filesystem::path& path, std::shared_ptr<const VoxelHierarchy> hierarchy) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open model file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::FormatError, "not a model file: bad magic");
  }
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  if (8 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw Error(ErrorCode::FormatError, "model header is truncated");
  }

  const int L = hierarchy->levels();
  std::vector<FeatureFieldSpec> fields;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    if (header.at("version").get<int>() != 1) throw Error(ErrorCode::FormatError, "unsupported model version");
    if (header.at("levels").get<int>() != L) {
      throw Error(ErrorCode::DimensionMismatch, "model has " + std::to_string(header.at("levels").get<int>()) +
                                                    " levels, hierarchy has " + std::to_string(L));
    }
    const auto d = header.at("d").get<Eigen::Index>();
    const auto& specs = header.at("fields");
    if (!specs.is_array() || specs.size() != static_cast<std::size_t>(L)) {
      throw Error(ErrorCode::FormatError, "model must list one field per level");
    }
    PayloadReader payload(bytes, 8 + header_len);
    for (int l = 1; l <= L; ++l) {
      const auto& spec = specs[static_cast<std::size_t>(l - 1)];
      const auto kind = spec.at("kind").get<std::string>();
      if (kind == "constant") {
        const auto value = spec.at("value").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(value.size()) != d) {
          throw Error(ErrorCode::DimensionMismatch, "constant field width differs from d");
        }
        fields.push_back(FeatureFieldSpec::make_constant(Eigen::Map<const Eigen::VectorXd>(value.data(), d)));
        continue;
      }
      if (kind != "learned") throw Error(ErrorCode::FormatError, "unknown field kind '" + kind + "'");
      const auto voxels = spec.at("voxel_count").get<std::size_t>();
      const auto feature_dim = spec.at("feature_dim").get<Eigen::Index>();
      const bool concat = spec.value("concat_position", false);
      if (voxels != hierarchy->level(l).size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "level " + std::to_string(l) + ": model has " + std::to_string(voxels) +
                        " voxels, hierarchy has " + std::to_string(hierarchy->level(l).size()));
      }
      if (feature_dim <= 0) throw Error(ErrorCode::FormatError, "feature_dim must be positive");
      MLPWeights mlp;
      for (const auto& layer : spec.at("layers")) {
        DenseLayer dl;
        const auto in = layer.at("in").get<Eigen::Index>();
        const auto out = layer.at("out").get<Eigen::Index>();
        if (in <= 0 || out <= 0) throw Error(ErrorCode::FormatError, "layer widths must be positive");
        dl.weight.resize(out, in);
        dl.bias.resize(out);
        dl.activation = parse_activation(layer.at("activation").get<std::string>());
        mlp.layers.push_back(std::move(dl));
      }
      Eigen::MatrixXd features(static_cast<Eigen::Index>(voxels), feature_dim);
      for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < feature_dim; ++c) features(r, c) = payload.next();
      }
      for (auto& layer : mlp.layers) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
          for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = payload.next();
        }
      }
      for (auto& layer : mlp.layers) {
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = payload.next();
      }
      mlp.validate();
      if (mlp.output_dim() != d) throw Error(ErrorCode::DimensionMismatch, "MLP output width differs from d");
      if (mlp.input_dim() != feature_dim + (concat ? 3 : 0)) {
        throw Error(ErrorCode::DimensionMismatch, "MLP input width does not match feature_dim");
      }
      fields.push_back(FeatureFieldSpec::make_learned(std::move(mlp), std::move(features), concat));
    }
    if (!payload.done()) throw Error(ErrorCode::FormatError, "model payload has trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad model header: ") + e.what());
  }
  return KernelModel(std::move(hierarchy), std::move(fields));
}

void save_model(const KernelModel& model, const std::filesystem::path& path) {
  const int L = model.hierarchy().levels();
  nlohmann::json header;
  header["version"] = 1;
  header["levels"] = L;
  header["d"] = model.dim(1);
  header["fields"] = nlohmann::json::array();
  std::string payload;
  auto put = [&payload](double v) {
    const auto f = static_cast<float>(v);
    char buf[4];
    std::memcpy(buf, &f, 4);
    payload.append(buf, 4);
  };
  for (int l = 1; l <= L; ++l) {
    const auto& spec = model.field(l);
    if (spec.dim() != model.dim(1)) {
      throw Error(ErrorCode::DimensionMismatch, "model files need one feature width across levels");
    }
    if (spec.kind == FeatureFieldSpec::Kind::constant) {
      header["fields"].push_back(
          {{"kind", "constant"}, {"value", std::vector<double>(spec.constant.data(), spec.constant.data() + spec.constant.size())}});
      continue;
    }
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : spec.mlp.layers) {
      layers.push_back({{"in", layer.weight.cols()},
                        {"out", layer.weight.rows()},
                        {"activation", layer.activation == Activation::relu ? "relu" : "none"}});
    }
    header["fields"].push_back({{"kind", "learned"},
                                {"voxel_count", spec.features.rows()},
                                {"feature_dim", spec.features.cols()},
                                {"concat_position", spec.concat_position},
                                {"layers", layers}});
    for (Eigen::Index r = 0; r < spec.features.rows(); ++r) {
      for (Eigen::Index c = 0; c < spec.features.cols(); ++c) put(spec.features(r, c));
    }
    for (const auto& layer : spec.mlp.layers) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) put(layer.weight(r, c));
      }
    }
    for (const auto& layer : spec.mlp.layers) {
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put(layer.bias[r]);
    }
  }
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&len), 4);
  os << text << payload;
  if (!os) throw Error(ErrorCode::IoError, "failed to write model file " + path.string());
}

}  // namespace kernelsurf
