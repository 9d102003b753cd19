#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mage::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense double-precision tensor, row-major storage.
class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor scalar(double v);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor from_matrix(const Eigen::MatrixXd& m);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Scalar access; requires size 1.
    double item() const;

    std::size_t rows() const;
    std::size_t cols() const;
    Eigen::Map<RowMat> mat();
    Eigen::Map<const RowMat> mat() const;
    Eigen::MatrixXd to_matrix() const;

    bool all_finite() const;
    void fill(double v);

 private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// One node of the reverse-mode graph. Intermediate nodes own a fresh grad
// per backward pass; parameter nodes keep an accumulating grad buffer that
// zero_grad() resets.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_param = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backprop;
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);

// When enabled (default), every primitive checks its output for NaN/Inf and
// throws NonFiniteValue.
void set_finite_check(bool enabled);
bool finite_check_enabled();

Var matmul(const Var& a, const Var& b);
// Same-shape elementwise sum, or rank-1 b broadcast across the rows of a.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var affine(const Var& x, const Var& w, const Var& b);
Var layer_norm(const Var& x, double eps = 1e-6);
// Sigmoid-weighted linear unit x * sigmoid(x).
Var silu(const Var& x);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& x, int axis, std::size_t begin, std::size_t len);
Var reshape(const Var& x, std::vector<std::size_t> shape);
Var transpose(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);

// Reverse-mode sweep from a scalar loss. Gradients of parameter nodes
// accumulate until ParamStore::zero_grad.
void backward(const Var& loss);

// Named parameter registry; iteration order is name order.
class ParamStore {
 public:
    Var create(const std::string& name, Tensor init);
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    Var at(const std::string& name) const;
    const std::map<std::string, Var>& params() const { return params_; }
    void zero_grad();
    std::size_t total_parameters() const;

 private:
    std::map<std::string, Var> params_;
};

double global_grad_norm(const ParamStore& store);
void clip_grad_norm(ParamStore& store, double max_norm);

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(ParamStore& store);
    long long step_count() const { return t_; }
    AdamConfig& config() { return cfg_; }

 private:
    struct Moments {
        Tensor m;
        Tensor v;
    };
    AdamConfig cfg_;
    long long t_ = 0;
    std::map<std::string, Moments> moments_;
};

// Named-tensor record file, magic "MAGK": the checkpoint substrate.
struct TensorFile {
    std::string config_json;
    std::map<std::string, Tensor> records;
};

void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path);

}  // namespace mage::nn
