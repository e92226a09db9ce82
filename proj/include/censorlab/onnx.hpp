// Minimal ONNX loader: decodes the protobuf wire format directly and
// evaluates a small operator subset (MatMul, Gemm, Add, Relu, Sigmoid,
// Tanh, Identity) — enough for linear models and MLP classifiers.
//
// Models must take one 1xN float32 tensor and produce one 1xM float32
// tensor; anything else is rejected at load.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <utility>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "censorlab/util.hpp"

namespace censorlab::onnx {

struct OnnxError {
    std::string message;
    bool shape_problem = false;  // distinguishes BadShape from BadFormat
};

namespace pb {

class Reader {
public:
    explicit Reader(std::span<const uint8_t> data) : data_(data) {}

    bool done() const { return pos_ >= data_.size(); }

    bool read_varint(uint64_t& out) {
        out = 0;
        int shift = 0;
        while (pos_ < data_.size() && shift < 64) {
            uint8_t b = data_[pos_++];
            out |= static_cast<uint64_t>(b & 0x7F) << shift;
            if (!(b & 0x80)) return true;
            shift += 7;
        }
        return false;
    }

    bool read_key(uint32_t& field, uint32_t& wire) {
        uint64_t key;
        if (!read_varint(key)) return false;
        field = static_cast<uint32_t>(key >> 3);
        wire = static_cast<uint32_t>(key & 7);
        return true;
    }

    bool read_bytes(std::span<const uint8_t>& out) {
        uint64_t len;
        if (!read_varint(len)) return false;
        if (pos_ + len > data_.size()) return false;
        out = data_.subspan(pos_, len);
        pos_ += len;
        return true;
    }

    bool read_string(std::string& out) {
        std::span<const uint8_t> b;
        if (!read_bytes(b)) return false;
        out.assign(reinterpret_cast<const char*>(b.data()), b.size());
        return true;
    }

    bool read_fixed32(uint32_t& out) {
        if (pos_ + 4 > data_.size()) return false;
        out = static_cast<uint32_t>(data_[pos_]) | static_cast<uint32_t>(data_[pos_ + 1]) << 8 |
              static_cast<uint32_t>(data_[pos_ + 2]) << 16 |
              static_cast<uint32_t>(data_[pos_ + 3]) << 24;
        pos_ += 4;
        return true;
    }

    bool skip(uint32_t wire) {
        switch (wire) {
            case 0: {
                uint64_t v;
                return read_varint(v);
            }
            case 1: pos_ += 8; return pos_ <= data_.size();
            case 2: {
                std::span<const uint8_t> b;
                return read_bytes(b);
            }
            case 5: pos_ += 4; return pos_ <= data_.size();
            default: return false;
        }
    }

private:
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

inline float bits_to_float(uint32_t bits) {
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace pb

struct Tensor {
    std::vector<int64_t> dims;
    std::vector<float> values;
};

struct Attribute {
    std::string name;
    float f = 0;
    int64_t i = 0;
};

struct Node {
    std::string op_type;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<Attribute> attrs;

    std::optional<float> attr_f(const std::string& n) const {
        for (const auto& a : attrs)
            if (a.name == n) return a.f;
        return std::nullopt;
    }
    std::optional<int64_t> attr_i(const std::string& n) const {
        for (const auto& a : attrs)
            if (a.name == n) return a.i;
        return std::nullopt;
    }
};

struct ValueInfo {
    std::string name;
    int32_t elem_type = 0;                 // 1 = float32
    std::vector<int64_t> dims;             // -1 for symbolic dims
};

struct Graph {
    std::vector<Node> nodes;
    std::map<std::string, Tensor> initializers;
    std::vector<ValueInfo> inputs;
    std::vector<ValueInfo> outputs;
};

namespace detail {

inline bool parse_tensor(std::span<const uint8_t> bytes, std::string& name, Tensor& t) {
    pb::Reader r(bytes);
    int32_t data_type = 0;
    std::span<const uint8_t> raw;
    uint32_t field, wire;
    while (!r.done()) {
        if (!r.read_key(field, wire)) return false;
        switch (field) {
            case 1: {  // dims
                if (wire == 0) {
                    uint64_t v;
                    if (!r.read_varint(v)) return false;
                    t.dims.push_back(static_cast<int64_t>(v));
                } else if (wire == 2) {  // packed
                    std::span<const uint8_t> b;
                    if (!r.read_bytes(b)) return false;
                    pb::Reader rr(b);
                    uint64_t v;
                    while (!rr.done())
                        if (rr.read_varint(v)) t.dims.push_back(static_cast<int64_t>(v));
                        else return false;
                } else
                    return false;
                break;
            }
            case 2: {  // data_type
                uint64_t v;
                if (!r.read_varint(v)) return false;
                data_type = static_cast<int32_t>(v);
                break;
            }
            case 4: {  // float_data
                if (wire == 5) {
                    uint32_t bits;
                    if (!r.read_fixed32(bits)) return false;
                    t.values.push_back(pb::bits_to_float(bits));
                } else if (wire == 2) {  // packed
                    std::span<const uint8_t> b;
                    if (!r.read_bytes(b) || b.size() % 4) return false;
                    pb::Reader rr(b);
                    uint32_t bits;
                    while (!rr.done()) {
                        if (!rr.read_fixed32(bits)) return false;
                        t.values.push_back(pb::bits_to_float(bits));
                    }
                } else
                    return false;
                break;
            }
            case 8:
                if (!r.read_string(name)) return false;
                break;
            case 9:
                if (!r.read_bytes(raw)) return false;
                break;
            default:
                if (!r.skip(wire)) return false;
        }
    }
    if (data_type != 1) return false;  // only float32 initializers
    if (t.values.empty() && !raw.empty()) {
        if (raw.size() % 4) return false;
        t.values.resize(raw.size() / 4);
        std::memcpy(t.values.data(), raw.data(), raw.size());  // raw_data is LE
    }
    return true;
}

inline bool parse_attribute(std::span<const uint8_t> bytes, Attribute& a) {
    pb::Reader r(bytes);
    uint32_t field, wire;
    while (!r.done()) {
        if (!r.read_key(field, wire)) return false;
        switch (field) {
            case 1:
                if (!r.read_string(a.name)) return false;
                break;
            case 2: {
                uint32_t bits;
                if (!r.read_fixed32(bits)) return false;
                a.f = pb::bits_to_float(bits);
                break;
            }
            case 3: {
                uint64_t v;
                if (!r.read_varint(v)) return false;
                a.i = static_cast<int64_t>(v);
                break;
            }
            default:
                if (!r.skip(wire)) return false;
        }
    }
    return true;
}

inline bool parse_node(std::span<const uint8_t> bytes, Node& n) {
    pb::Reader r(bytes);
    uint32_t field, wire;
    while (!r.done()) {
        if (!r.read_key(field, wire)) return false;
        switch (field) {
            case 1: {
                std::string s;
                if (!r.read_string(s)) return false;
                n.inputs.push_back(std::move(s));
                break;
            }
            case 2: {
                std::string s;
                if (!r.read_string(s)) return false;
                n.outputs.push_back(std::move(s));
                break;
            }
            case 4:
                if (!r.read_string(n.op_type)) return false;
                break;
            case 5: {
                std::span<const uint8_t> b;
                if (!r.read_bytes(b)) return false;
                Attribute a;
                if (!parse_attribute(b, a)) return false;
                n.attrs.push_back(std::move(a));
                break;
            }
            default:
                if (!r.skip(wire)) return false;
        }
    }
    return true;
}

inline bool parse_value_info(std::span<const uint8_t> bytes, ValueInfo& vi) {
    pb::Reader r(bytes);
    uint32_t field, wire;
    while (!r.done()) {
        if (!r.read_key(field, wire)) return false;
        if (field == 1) {
            if (!r.read_string(vi.name)) return false;
        } else if (field == 2) {  // TypeProto
            std::span<const uint8_t> tb;
            if (!r.read_bytes(tb)) return false;
            pb::Reader tr(tb);
            uint32_t tf, tw;
            while (!tr.done()) {
                if (!tr.read_key(tf, tw)) return false;
                if (tf == 1) {  // tensor_type
                    std::span<const uint8_t> ttb;
                    if (!tr.read_bytes(ttb)) return false;
                    pb::Reader ttr(ttb);
                    uint32_t ttf, ttw;
                    while (!ttr.done()) {
                        if (!ttr.read_key(ttf, ttw)) return false;
                        if (ttf == 1) {
                            uint64_t v;
                            if (!ttr.read_varint(v)) return false;
                            vi.elem_type = static_cast<int32_t>(v);
                        } else if (ttf == 2) {  // shape
                            std::span<const uint8_t> sb;
                            if (!ttr.read_bytes(sb)) return false;
                            pb::Reader sr(sb);
                            uint32_t sf, sw;
                            while (!sr.done()) {
                                if (!sr.read_key(sf, sw)) return false;
                                if (sf == 1) {  // dim
                                    std::span<const uint8_t> db;
                                    if (!sr.read_bytes(db)) return false;
                                    pb::Reader dr(db);
                                    uint32_t df, dw;
                                    int64_t dim = -1;  // symbolic unless dim_value
                                    while (!dr.done()) {
                                        if (!dr.read_key(df, dw)) return false;
                                        if (df == 1 && dw == 0) {
                                            uint64_t v;
                                            if (!dr.read_varint(v)) return false;
                                            dim = static_cast<int64_t>(v);
                                        } else if (!dr.skip(dw))
                                            return false;
                                    }
                                    vi.dims.push_back(dim);
                                } else if (!sr.skip(sw))
                                    return false;
                            }
                        } else if (!ttr.skip(ttw))
                            return false;
                    }
                } else if (!tr.skip(tw))
                    return false;
            }
        } else if (!r.skip(wire))
            return false;
    }
    return true;
}

inline bool parse_graph(std::span<const uint8_t> bytes, Graph& g) {
    pb::Reader r(bytes);
    uint32_t field, wire;
    while (!r.done()) {
        if (!r.read_key(field, wire)) return false;
        switch (field) {
            case 1: {
                std::span<const uint8_t> b;
                if (!r.read_bytes(b)) return false;
                Node n;
                if (!parse_node(b, n)) return false;
                g.nodes.push_back(std::move(n));
                break;
            }
            case 5: {
                std::span<const uint8_t> b;
                if (!r.read_bytes(b)) return false;
                std::string name;
                Tensor t;
                if (!parse_tensor(b, name, t)) return false;
                g.initializers[name] = std::move(t);
                break;
            }
            case 11:
            case 12: {
                std::span<const uint8_t> b;
                if (!r.read_bytes(b)) return false;
                ValueInfo vi;
                if (!parse_value_info(b, vi)) return false;
                (field == 11 ? g.inputs : g.outputs).push_back(std::move(vi));
                break;
            }
            default:
                if (!r.skip(wire)) return false;
        }
    }
    return true;
}

} // namespace detail

// A loaded, validated model: one 1xN float input, one 1xM float output.
class Model {
public:
    static Result<Model, OnnxError> load(std::span<const uint8_t> bytes) {
        Graph g;
        bool have_graph = false;
        pb::Reader r(bytes);
        uint32_t field, wire;
        while (!r.done()) {
            if (!r.read_key(field, wire))
                return OnnxError{"malformed protobuf framing"};
            if (field == 7 && wire == 2) {
                std::span<const uint8_t> b;
                if (!r.read_bytes(b)) return OnnxError{"truncated graph"};
                if (!detail::parse_graph(b, g)) return OnnxError{"malformed graph"};
                have_graph = true;
            } else if (!r.skip(wire)) {
                return OnnxError{"malformed protobuf field"};
            }
        }
        if (!have_graph) return OnnxError{"model has no graph"};

        Model m;
        m.graph_ = std::move(g);

        // The data input is the one graph input with no initializer.
        const ValueInfo* in = nullptr;
        for (const auto& vi : m.graph_.inputs) {
            if (m.graph_.initializers.count(vi.name)) continue;
            if (in) return OnnxError{"more than one data input", true};
            in = &vi;
        }
        if (!in || m.graph_.outputs.size() != 1)
            return OnnxError{"need exactly one data input and one output", true};

        auto flat_len = [](const ValueInfo& vi) -> int64_t {
            // Require 1xK (a symbolic batch dim counts as 1) or plain [K].
            if (vi.dims.size() == 2) {
                if (vi.dims[0] > 1) return -1;
                return vi.dims[1];
            }
            if (vi.dims.size() == 1) return vi.dims[0];
            return -1;
        };
        if (in->elem_type != 1 || m.graph_.outputs[0].elem_type != 1)
            return OnnxError{"tensors must be float32", true};
        int64_t n = flat_len(*in);
        int64_t mm = flat_len(m.graph_.outputs[0]);
        if (n <= 0 || mm <= 0)
            return OnnxError{"input/output must be fixed 1xN and 1xM", true};
        m.input_name_ = in->name;
        m.output_name_ = m.graph_.outputs[0].name;
        m.input_len_ = static_cast<size_t>(n);
        m.output_len_ = static_cast<size_t>(mm);

        // Dry-run to reject unsupported operators at load time.
        std::vector<float> probe(m.input_len_, 0.0f);
        auto out = m.run(probe);
        if (!out) return out.error();
        if (out->size() != m.output_len_)
            return OnnxError{"graph output size disagrees with declared shape", true};
        return m;
    }

    size_t input_len() const { return input_len_; }
    size_t output_len() const { return output_len_; }

    Result<std::vector<float>, OnnxError> run(std::span<const float> input) const {
        if (input.size() != input_len_) return OnnxError{"input length mismatch", true};
        std::map<std::string, Tensor> env;
        for (const auto& [name, t] : graph_.initializers) env[name] = t;
        Tensor in;
        in.dims = {1, static_cast<int64_t>(input_len_)};
        in.values.assign(input.begin(), input.end());
        env[input_name_] = std::move(in);

        for (const auto& node : graph_.nodes) {
            auto res = eval_node(node, env);
            if (!res) return res.error();
        }
        auto it = env.find(output_name_);
        if (it == env.end()) return OnnxError{"graph never produced its output"};
        return it->second.values;
    }

private:
    static size_t flat(const Tensor& t) { return t.values.size(); }

    // Rows/cols of a tensor viewed as a matrix; rank-1 is a single row.
    static std::pair<size_t, size_t> mat_dims(const Tensor& t) {
        if (t.dims.size() == 2)
            return {static_cast<size_t>(t.dims[0]), static_cast<size_t>(t.dims[1])};
        return {1, t.values.size()};
    }

    static Result<Unit, OnnxError> ok() { return Unit{}; }

    Result<Unit, OnnxError> eval_node(const Node& node,
                                      std::map<std::string, Tensor>& env) const {
        auto get = [&](const std::string& name) -> const Tensor* {
            auto it = env.find(name);
            return it == env.end() ? nullptr : &it->second;
        };
        const std::string& op = node.op_type;

        if (op == "Identity" || op == "Relu" || op == "Sigmoid" || op == "Tanh") {
            const Tensor* a = node.inputs.size() == 1 ? get(node.inputs[0]) : nullptr;
            if (!a) return OnnxError{op + ": missing input"};
            Tensor out = *a;
            for (float& v : out.values) {
                if (op == "Relu")
                    v = v > 0 ? v : 0;
                else if (op == "Sigmoid")
                    v = 1.0f / (1.0f + std::exp(-v));
                else if (op == "Tanh")
                    v = std::tanh(v);
            }
            env[node.outputs.at(0)] = std::move(out);
            return ok();
        }
        if (op == "Add") {
            const Tensor* a = node.inputs.size() == 2 ? get(node.inputs[0]) : nullptr;
            const Tensor* b = a ? get(node.inputs[1]) : nullptr;
            if (!a || !b) return OnnxError{"Add: missing input"};
            const Tensor* big = flat(*a) >= flat(*b) ? a : b;
            const Tensor* small = big == a ? b : a;
            if (flat(*small) == 0 || flat(*big) % flat(*small) != 0)
                return OnnxError{"Add: shapes not broadcastable", true};
            Tensor out = *big;
            for (size_t i = 0; i < out.values.size(); ++i)
                out.values[i] += small->values[i % flat(*small)];
            env[node.outputs.at(0)] = std::move(out);
            return ok();
        }
        if (op == "MatMul" || op == "Gemm") {
            const Tensor* a = !node.inputs.empty() ? get(node.inputs[0]) : nullptr;
            const Tensor* b = node.inputs.size() >= 2 ? get(node.inputs[1]) : nullptr;
            if (!a || !b) return OnnxError{op + ": missing input"};
            float alpha = 1.0f, beta = 1.0f;
            bool trans_b = false;
            if (op == "Gemm") {
                alpha = node.attr_f("alpha").value_or(1.0f);
                beta = node.attr_f("beta").value_or(1.0f);
                if (node.attr_i("transA").value_or(0) != 0)
                    return OnnxError{"Gemm: transA unsupported"};
                trans_b = node.attr_i("transB").value_or(0) != 0;
            }
            auto [ar, ac] = mat_dims(*a);
            auto [br, bc] = mat_dims(*b);
            if (trans_b) std::swap(br, bc);
            if (ac != br) return OnnxError{op + ": inner dimensions disagree", true};
            Tensor out;
            out.dims = {static_cast<int64_t>(ar), static_cast<int64_t>(bc)};
            out.values.assign(ar * bc, 0.0f);
            for (size_t i = 0; i < ar; ++i)
                for (size_t j = 0; j < bc; ++j) {
                    float acc = 0;
                    for (size_t k = 0; k < ac; ++k) {
                        float bv = trans_b ? b->values[j * br + k] : b->values[k * bc + j];
                        acc += a->values[i * ac + k] * bv;
                    }
                    out.values[i * bc + j] = alpha * acc;
                }
            if (op == "Gemm" && node.inputs.size() >= 3) {
                const Tensor* c = get(node.inputs[2]);
                if (!c) return OnnxError{"Gemm: missing C input"};
                if (flat(*c) == 0 || flat(out) % flat(*c) != 0)
                    return OnnxError{"Gemm: C not broadcastable", true};
                for (size_t i = 0; i < out.values.size(); ++i)
                    out.values[i] += beta * c->values[i % flat(*c)];
            }
            env[node.outputs.at(0)] = std::move(out);
            return ok();
        }
        return OnnxError{"unsupported operator: " + op};
    }

    Graph graph_;
    std::string input_name_;
    std::string output_name_;
    size_t input_len_ = 0;
    size_t output_len_ = 0;
};

} // namespace censorlab::onnx
