// Named inference models invoked by censor programs.
//
// Two backends: ONNX files (see onnx.hpp) and a plain-text affine format
// used for deterministic testing. Both map a 1xN float32 vector to 1xM.
//
// .affine layout ('#' starts a comment):
//   N M
//   <M rows of N weights, row-major>
//   <M biases>
#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "censorlab/onnx.hpp"
#include "censorlab/util.hpp"

namespace censorlab {

enum class ModelErrc { bad_format, bad_shape, unknown_model, shape_mismatch, io, budget };

struct ModelError {
    ModelErrc code;
    std::string message;
};

inline const char* to_string(ModelErrc c) {
    switch (c) {
        case ModelErrc::bad_format: return "bad-format";
        case ModelErrc::bad_shape: return "bad-shape";
        case ModelErrc::unknown_model: return "unknown-model";
        case ModelErrc::shape_mismatch: return "shape-mismatch";
        case ModelErrc::io: return "io";
        case ModelErrc::budget: return "budget";
    }
    return "?";
}

// y = W.x + b with W row-major MxN.
struct AffineModel {
    size_t n = 0, m = 0;
    std::vector<float> weights;  // m*n
    std::vector<float> bias;     // m

    std::vector<float> run(std::span<const float> x) const {
        std::vector<float> y(m);
        for (size_t i = 0; i < m; ++i) {
            float acc = bias[i];
            for (size_t j = 0; j < n; ++j) acc += weights[i * n + j] * x[j];
            y[i] = acc;
        }
        return y;
    }

    static Result<AffineModel, ModelError> parse(const std::string& text) {
        std::vector<float> numbers;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::istringstream ls(line);
            float v;
            while (ls >> v) numbers.push_back(v);
            if (!ls.eof())
                return ModelError{ModelErrc::bad_format, "non-numeric token in affine file"};
        }
        if (numbers.size() < 2)
            return ModelError{ModelErrc::bad_format, "affine file missing dimensions"};
        AffineModel a;
        a.n = static_cast<size_t>(numbers[0]);
        a.m = static_cast<size_t>(numbers[1]);
        if (a.n == 0 || a.m == 0 || numbers[0] != static_cast<float>(a.n) ||
            numbers[1] != static_cast<float>(a.m))
            return ModelError{ModelErrc::bad_shape, "affine dimensions must be positive integers"};
        size_t want = 2 + a.m * a.n + a.m;
        if (numbers.size() != want)
            return ModelError{ModelErrc::bad_format,
                              "expected " + std::to_string(want) + " numbers, found " +
                                  std::to_string(numbers.size())};
        a.weights.assign(numbers.begin() + 2, numbers.begin() + 2 + a.m * a.n);
        a.bias.assign(numbers.begin() + 2 + static_cast<long>(a.m * a.n), numbers.end());
        return a;
    }
};

struct ModelHandle {
    std::string name;
    std::string backend;  // "affine" or "onnx"
    size_t input_len = 0;
    size_t output_len = 0;
    AffineModel affine;
    std::shared_ptr<const onnx::Model> onnx_model;

    std::vector<float> infer(std::span<const float> x) const {
        if (backend == "affine") return affine.run(x);
        auto out = onnx_model->run(x);
        return out ? *out : std::vector<float>(output_len, 0.0f);
    }
};

class ModelStore {
public:
    // Per-inference wall-clock cap; an overrun takes the fault path upstream.
    void set_inference_budget(double seconds) { budget_seconds_ = seconds; }
    double inference_budget() const { return budget_seconds_; }

    Result<std::shared_ptr<const ModelHandle>, ModelError> load(const std::string& name,
                                                                const std::string& path) {
        auto dot = path.rfind('.');
        std::string ext = dot == std::string::npos ? "" : to_lower(path.substr(dot));
        if (ext != ".onnx" && ext != ".affine")
            return ModelError{ModelErrc::bad_format, "unknown model extension: " + path};

        std::ifstream f(path, std::ios::binary);
        if (!f) return ModelError{ModelErrc::io, "cannot read " + path};
        std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());

        auto handle = std::make_shared<ModelHandle>();
        handle->name = name;
        if (ext == ".affine") {
            auto a = AffineModel::parse(bytes);
            if (!a) return a.error();
            handle->backend = "affine";
            handle->input_len = a->n;
            handle->output_len = a->m;
            handle->affine = std::move(*a);
        } else {
            auto m = onnx::Model::load(std::span<const uint8_t>(
                reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()));
            if (!m)
                return ModelError{m.error().shape_problem ? ModelErrc::bad_shape
                                                          : ModelErrc::bad_format,
                                  m.error().message};
            handle->backend = "onnx";
            handle->input_len = m->input_len();
            handle->output_len = m->output_len();
            handle->onnx_model = std::make_shared<const onnx::Model>(std::move(*m));
        }

        std::lock_guard lock(mu_);
        models_[name] = handle;  // reload under the same name replaces
        return std::shared_ptr<const ModelHandle>(handle);
    }

    std::shared_ptr<const ModelHandle> get(const std::string& name) const {
        std::lock_guard lock(mu_);
        auto it = models_.find(name);
        return it == models_.end() ? nullptr : it->second;
    }

    Result<std::vector<float>, ModelError> run(const std::string& name,
                                               std::span<const float> input) const {
        auto handle = get(name);
        if (!handle) return ModelError{ModelErrc::unknown_model, name};
        if (input.size() != handle->input_len)
            return ModelError{ModelErrc::shape_mismatch,
                              name + " expects " + std::to_string(handle->input_len) +
                                  " inputs, got " + std::to_string(input.size())};
        auto start = std::chrono::steady_clock::now();
        auto out = handle->infer(input);
        std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        if (elapsed.count() > budget_seconds_)
            return ModelError{ModelErrc::budget, name + " exceeded the inference budget"};
        return out;
    }

    Result<Unit, ModelError> remove(const std::string& name) {
        std::lock_guard lock(mu_);
        if (models_.erase(name) == 0) return ModelError{ModelErrc::unknown_model, name};
        return Unit{};
    }

    std::vector<std::string> list() const {
        std::lock_guard lock(mu_);
        std::vector<std::string> names;
        for (const auto& [n, h] : models_) names.push_back(n);
        return names;
    }

    void clear() {
        std::lock_guard lock(mu_);
        models_.clear();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const ModelHandle>> models_;
    double budget_seconds_ = 0.050;
};

} // namespace censorlab
