#pragma once

#include "ddlm/common.hpp"

#include <json.hpp>

#include <cstring>
#include <map>

namespace ddlm {

/// Flat binary tensor archive: magic "DDLM1", a JSON manifest (config
/// snapshot + per-tensor name/shape/offset), then raw little-endian doubles.
class TensorArchive {
 public:
  nlohmann::json config;  // arbitrary config snapshot

  void add(const std::string& name, const Mat& m) {
    if (tensors_.count(name)) throw std::invalid_argument("duplicate tensor: " + name);
    order_.push_back(name);
    tensors_[name] = m;
  }

  const Mat& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::runtime_error("checkpoint lacks tensor: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }

  void save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["config"] = config;
    std::uint64_t offset = 0;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& name : order_) {
      const Mat& m = tensors_.at(name);
      list.push_back({{"name", name},
                      {"rows", m.rows()},
                      {"cols", m.cols()},
                      {"offset", offset}});
      offset += std::uint64_t(m.size()) * sizeof(double);
    }
    manifest["tensors"] = list;
    std::string mjson = manifest.dump();

    std::string body;
    body.reserve(16 + mjson.size() + offset);
    body += "DDLM1";
    std::uint32_t version = 1;
    std::uint64_t mlen = mjson.size();
    body.append(reinterpret_cast<const char*>(&version), sizeof(version));
    body.append(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    body += mjson;
    for (const auto& name : order_) {
      const Mat& m = tensors_.at(name);
      // row-major on disk so the layout is independent of Eigen defaults
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        body.append(reinterpret_cast<const char*>(m.row(i).eval().data()),
                    std::size_t(m.cols()) * sizeof(double));
    }
    atomic_write_file(path, body);
  }

  static TensorArchive load(const std::string& path) {
    std::string body = read_text_file(path);
    if (body.size() < 17 || body.compare(0, 5, "DDLM1") != 0)
      throw std::runtime_error("not a DDLM1 checkpoint: " + path);
    std::uint32_t version = 0;
    std::uint64_t mlen = 0;
    std::memcpy(&version, body.data() + 5, sizeof(version));
    std::memcpy(&mlen, body.data() + 9, sizeof(mlen));
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    if (body.size() < 17 + mlen) throw std::runtime_error("truncated checkpoint: " + path);
    nlohmann::json manifest = nlohmann::json::parse(body.substr(17, mlen));
    TensorArchive a;
    a.config = manifest.value("config", nlohmann::json::object());
    std::size_t payload = 17 + mlen;
    for (const auto& t : manifest.at("tensors")) {
      std::string name = t.at("name");
      Eigen::Index rows = t.at("rows"), cols = t.at("cols");
      std::uint64_t offset = t.at("offset");
      std::size_t bytes = std::size_t(rows) * std::size_t(cols) * sizeof(double);
      if (payload + offset + bytes > body.size())
        throw std::runtime_error("truncated checkpoint payload: " + path);
      Mat m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double* src = reinterpret_cast<const double*>(
            body.data() + payload + offset + std::size_t(i) * std::size_t(cols) * sizeof(double));
        m.row(i) = Eigen::Map<const Eigen::RowVectorXd, Eigen::Unaligned>(src, cols);
      }
      a.add(name, m);
    }
    return a;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Mat> tensors_;
};

}  // namespace ddlm
