//
// Copyright 2026 The dpbf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpbf/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dpbf/errors.h"

namespace dpbf {
namespace {

constexpr char kMagic[4] = {'D', 'P', 'B', 'F'};

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void PutF64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t U32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double F64() {
    Need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(bytes_[pos_ + i]))
              << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw InputError("truncated checkpoint at byte " + std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string EncodeCheckpoint(const Network& net) {
  std::string out(kMagic, 4);
  PutU32(out, kCheckpointVersion);
  for (const ConstParamRef& p : net.Parameters()) {
    PutU32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    PutU32(out, static_cast<std::uint32_t>(p.tensor->rank()));
    for (std::size_t d : p.tensor->shape()) {
      PutU32(out, static_cast<std::uint32_t>(d));
    }
    for (double v : p.tensor->data()) PutF64(out, v);
  }
  return out;
}

std::vector<NamedTensor> DecodeCheckpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.Bytes(4) != std::string(kMagic, 4)) {
    throw InputError("not a checkpoint: bad magic");
  }
  const std::uint32_t version = in.U32();
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " +
                     std::to_string(version));
  }
  std::vector<NamedTensor> records;
  LedgerScope scope(kTagParameter);
  while (!in.done()) {
    NamedTensor rec;
    rec.name = in.Bytes(in.U32());
    Shape shape(in.U32());
    for (std::size_t& d : shape) d = in.U32();
    rec.value = Tensor(shape);
    for (double& v : rec.value.data()) v = in.F64();
    records.push_back(std::move(rec));
  }
  return records;
}

void ApplyCheckpoint(Network& net, const std::vector<NamedTensor>& records) {
  std::vector<ParamRef> params = net.Parameters();
  if (params.size() != records.size()) {
    throw InputError("checkpoint holds " + std::to_string(records.size()) +
                     " parameters, network has " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != records[i].name ||
        params[i].tensor->shape() != records[i].value.shape()) {
      throw InputError("checkpoint record " + records[i].name + " " +
                       records[i].value.ShapeString() + " does not match " +
                       params[i].name + " " + params[i].tensor->ShapeString());
    }
    std::copy(records[i].value.data().begin(), records[i].value.data().end(),
              params[i].tensor->data().begin());
  }
}

void SaveCheckpoint(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  const std::string bytes = EncodeCheckpoint(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void LoadCheckpoint(Network& net, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  ApplyCheckpoint(net, DecodeCheckpoint(bytes));
}

}  // namespace dpbf
