#include "mage/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "mage/binio.hpp"
#include "mage/errors.hpp"

namespace mage::nn {

namespace {

bool g_finite_check = true;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

void check_finite(const Tensor& t, const char* op) {
    if (g_finite_check && !t.all_finite())
        throw NonFiniteValue(std::string(op) + ": produced NaN/Inf");
}

void ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros(n.value.shape());
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop,
            const char* op) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in->requires_grad;
    node->inputs = std::move(inputs);
    if (node->requires_grad) node->backprop = std::move(backprop);
    return node;
}

void accumulate(const Var& target, const Tensor& delta) {
    if (!target->requires_grad) return;
    ensure_grad(*target);
    Eigen::Map<Eigen::VectorXd>(target->grad.data(), target->grad.size()) +=
        Eigen::Map<const Eigen::VectorXd>(delta.data(), delta.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(shape_product(shape_), 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape_ = {};
    t.data_ = {v};
    return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data) {
    if (shape_product(shape) != data.size())
        throw ShapeMismatch("Tensor::from_data: shape/data size mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.mat() = m;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw ShapeMismatch("Tensor::item: size " + std::to_string(size()));
    return data_[0];
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeMismatch("Tensor::rows: rank " + std::to_string(rank()));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeMismatch("Tensor::cols: rank " + std::to_string(rank()));
    return shape_[1];
}

Eigen::Map<RowMat> Tensor::mat() {
    return {data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
}

Eigen::Map<const RowMat> Tensor::mat() const {
    return {data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
}

Eigen::MatrixXd Tensor::to_matrix() const { return mat(); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

// ---------------------------------------------------------------------------
// Graph primitives
// ---------------------------------------------------------------------------

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return node;
}

void set_finite_check(bool enabled) { g_finite_check = enabled; }
bool finite_check_enabled() { return g_finite_check; }

Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.cols() != b->value.rows())
        throw ShapeMismatch("matmul: " + shape_str(a->value.shape()) + " x " +
                            shape_str(b->value.shape()));
    Tensor out({a->value.rows(), b->value.cols()});
    out.mat().noalias() = a->value.mat() * b->value.mat();
    return make_op(std::move(out), {a, b},
                   [a, b](Node& self) {
                       if (a->requires_grad) {
                           ensure_grad(*a);
                           a->grad.mat().noalias() += self.grad.mat() * b->value.mat().transpose();
                       }
                       if (b->requires_grad) {
                           ensure_grad(*b);
                           b->grad.mat().noalias() += a->value.mat().transpose() * self.grad.mat();
                       }
                   },
                   "matmul");
}

Var add(const Var& a, const Var& b) {
    const bool broadcast =
        a->value.rank() == 2 && b->value.rank() == 1 && b->value.size() == a->value.cols();
    if (!broadcast && !a->value.same_shape(b->value))
        throw ShapeMismatch("add: " + shape_str(a->value.shape()) + " vs " +
                            shape_str(b->value.shape()));
    Tensor out = a->value;
    if (broadcast) {
        out.mat().rowwise() +=
            Eigen::Map<const Eigen::RowVectorXd>(b->value.data(), b->value.size());
    } else {
        Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) +=
            Eigen::Map<const Eigen::VectorXd>(b->value.data(), b->value.size());
    }
    return make_op(std::move(out), {a, b},
                   [a, b, broadcast](Node& self) {
                       accumulate(a, self.grad);
                       if (!b->requires_grad) return;
                       ensure_grad(*b);
                       if (broadcast) {
                           Eigen::Map<Eigen::RowVectorXd>(b->grad.data(), b->grad.size()) +=
                               self.grad.mat().colwise().sum();
                       } else {
                           accumulate(b, self.grad);
                       }
                   },
                   "add");
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeMismatch("mul: " + shape_str(a->value.shape()) + " vs " +
                            shape_str(b->value.shape()));
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b},
                   [a, b](Node& self) {
                       if (a->requires_grad) {
                           ensure_grad(*a);
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                               a->grad[i] += self.grad[i] * b->value[i];
                       }
                       if (b->requires_grad) {
                           ensure_grad(*b);
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                               b->grad[i] += self.grad[i] * a->value[i];
                       }
                   },
                   "mul");
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_op(std::move(out), {a},
                   [a, s](Node& self) {
                       if (!a->requires_grad) return;
                       ensure_grad(*a);
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                           a->grad[i] += s * self.grad[i];
                   },
                   "scale");
}

Var affine(const Var& x, const Var& w, const Var& b) { return add(matmul(x, w), b); }

Var layer_norm(const Var& x, double eps) {
    if (x->value.rank() != 2) throw ShapeMismatch("layer_norm: rank-2 input required");
    const auto rows = x->value.rows();
    Tensor out(x->value.shape());
    Tensor inv_sigma({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = x->value.mat().row(static_cast<Eigen::Index>(r));
        const double mu = row.mean();
        const double var = (row.array() - mu).square().mean();
        const double g = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = g;
        out.mat().row(static_cast<Eigen::Index>(r)) = (row.array() - mu) * g;
    }
    Tensor normalized = out;  // captured for the backward rule
    return make_op(std::move(out), {x},
                   [x, normalized, inv_sigma](Node& self) {
                       if (!x->requires_grad) return;
                       ensure_grad(*x);
                       for (std::size_t r = 0; r < normalized.rows(); ++r) {
                           const auto i = static_cast<Eigen::Index>(r);
                           const auto dy = self.grad.mat().row(i);
                           const auto y = normalized.mat().row(i);
                           const double m_dy = dy.mean();
                           const double m_dyy = (dy.array() * y.array()).mean();
                           x->grad.mat().row(i).array() +=
                               inv_sigma[r] * (dy.array() - m_dy - y.array() * m_dyy);
                       }
                   },
                   "layer_norm");
}

Var silu(const Var& x) {
    Tensor out(x->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x->value[i];
        out[i] = v / (1.0 + std::exp(-v));
    }
    return make_op(std::move(out), {x},
                   [x](Node& self) {
                       if (!x->requires_grad) return;
                       ensure_grad(*x);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                           const double v = x->value[i];
                           const double s = 1.0 / (1.0 + std::exp(-v));
                           x->grad[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
                       }
                   },
                   "silu");
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw ShapeMismatch("concat: no inputs");
    if (axis != 0 && axis != 1) throw ShapeMismatch("concat: axis must be 0 or 1");
    for (const auto& p : parts)
        if (p->value.rank() != 2) throw ShapeMismatch("concat: rank-2 inputs required");
    const std::size_t fixed = axis == 0 ? parts[0]->value.cols() : parts[0]->value.rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        const std::size_t f = axis == 0 ? p->value.cols() : p->value.rows();
        if (f != fixed) throw ShapeMismatch("concat: inputs disagree on the fixed axis");
        total += axis == 0 ? p->value.rows() : p->value.cols();
    }
    Tensor out(axis == 0 ? std::vector<std::size_t>{total, fixed}
                         : std::vector<std::size_t>{fixed, total});
    std::size_t at = 0;
    for (const auto& p : parts) {
        if (axis == 0) {
            out.mat().middleRows(static_cast<Eigen::Index>(at),
                                 static_cast<Eigen::Index>(p->value.rows())) = p->value.mat();
            at += p->value.rows();
        } else {
            out.mat().middleCols(static_cast<Eigen::Index>(at),
                                 static_cast<Eigen::Index>(p->value.cols())) = p->value.mat();
            at += p->value.cols();
        }
    }
    return make_op(std::move(out), parts,
                   [parts, axis](Node& self) {
                       std::size_t at = 0;
                       for (const auto& p : parts) {
                           const std::size_t extent =
                               axis == 0 ? p->value.rows() : p->value.cols();
                           if (p->requires_grad) {
                               ensure_grad(*p);
                               if (axis == 0) {
                                   p->grad.mat() +=
                                       self.grad.mat().middleRows(static_cast<Eigen::Index>(at),
                                                                  static_cast<Eigen::Index>(extent));
                               } else {
                                   p->grad.mat() +=
                                       self.grad.mat().middleCols(static_cast<Eigen::Index>(at),
                                                                  static_cast<Eigen::Index>(extent));
                               }
                           }
                           at += extent;
                       }
                   },
                   "concat");
}

Var slice(const Var& x, int axis, std::size_t begin, std::size_t len) {
    if (x->value.rank() != 2) throw ShapeMismatch("slice: rank-2 input required");
    if (axis != 0 && axis != 1) throw ShapeMismatch("slice: axis must be 0 or 1");
    const std::size_t extent = axis == 0 ? x->value.rows() : x->value.cols();
    if (begin + len > extent) throw ShapeMismatch("slice: out of range");
    Tensor out(axis == 0 ? std::vector<std::size_t>{len, x->value.cols()}
                         : std::vector<std::size_t>{x->value.rows(), len});
    if (axis == 0) {
        out.mat() = x->value.mat().middleRows(static_cast<Eigen::Index>(begin),
                                              static_cast<Eigen::Index>(len));
    } else {
        out.mat() = x->value.mat().middleCols(static_cast<Eigen::Index>(begin),
                                              static_cast<Eigen::Index>(len));
    }
    return make_op(std::move(out), {x},
                   [x, axis, begin, len](Node& self) {
                       if (!x->requires_grad) return;
                       ensure_grad(*x);
                       if (axis == 0) {
                           x->grad.mat().middleRows(static_cast<Eigen::Index>(begin),
                                                    static_cast<Eigen::Index>(len)) +=
                               self.grad.mat();
                       } else {
                           x->grad.mat().middleCols(static_cast<Eigen::Index>(begin),
                                                    static_cast<Eigen::Index>(len)) +=
                               self.grad.mat();
                       }
                   },
                   "slice");
}

Var reshape(const Var& x, std::vector<std::size_t> shape) {
    if (shape_product(shape) != x->value.size()) throw ShapeMismatch("reshape: element count");
    Tensor out = x->value;
    Tensor reshaped;
    reshaped = Tensor::from_data(std::move(shape),
                                 std::vector<double>(out.data(), out.data() + out.size()));
    return make_op(std::move(reshaped), {x},
                   [x](Node& self) { accumulate(x, self.grad); }, "reshape");
}

Var transpose(const Var& x) {
    if (x->value.rank() != 2) throw ShapeMismatch("transpose: rank-2 input required");
    Tensor out({x->value.cols(), x->value.rows()});
    out.mat() = x->value.mat().transpose();
    return make_op(std::move(out), {x},
                   [x](Node& self) {
                       if (!x->requires_grad) return;
                       ensure_grad(*x);
                       x->grad.mat() += self.grad.mat().transpose();
                   },
                   "transpose");
}

Var sum(const Var& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) total += x->value[i];
    return make_op(Tensor::scalar(total), {x},
                   [x](Node& self) {
                       if (!x->requires_grad) return;
                       ensure_grad(*x);
                       const double g = self.grad[0];
                       for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
                   },
                   "sum");
}

Var mean(const Var& x) {
    if (x->value.size() == 0) throw ShapeMismatch("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x->value.size()));
}

Var mse(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeMismatch("mse: " + shape_str(a->value.shape()) + " vs " +
                            shape_str(b->value.shape()));
    const std::size_t n = a->value.size();
    if (n == 0) throw ShapeMismatch("mse: empty tensors");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a->value[i] - b->value[i];
        total += d * d;
    }
    return make_op(Tensor::scalar(total / static_cast<double>(n)), {a, b},
                   [a, b, n](Node& self) {
                       const double g = 2.0 * self.grad[0] / static_cast<double>(n);
                       if (a->requires_grad) {
                           ensure_grad(*a);
                           for (std::size_t i = 0; i < n; ++i)
                               a->grad[i] += g * (a->value[i] - b->value[i]);
                       }
                       if (b->requires_grad) {
                           ensure_grad(*b);
                           for (std::size_t i = 0; i < n; ++i)
                               b->grad[i] -= g * (a->value[i] - b->value[i]);
                       }
                   },
                   "mse");
}

void backward(const Var& loss) {
    if (loss->value.size() != 1)
        throw NotScalarLoss("backward: loss has " + std::to_string(loss->value.size()) +
                            " elements");
    // Iterative post-order topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* next = node->inputs[idx++].get();
            if (next->requires_grad && visited.insert(next).second) stack.push_back({next, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Fresh gradients for intermediates; parameters keep accumulating.
    for (Node* n : order) {
        if (n->is_param) {
            ensure_grad(*n);
        } else {
            n->grad = Tensor::zeros(n->value.shape());
        }
    }
    loss->grad = Tensor::scalar(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

Var ParamStore::create(const std::string& name, Tensor init) {
    if (params_.count(name)) throw InvalidArgument("ParamStore: duplicate parameter " + name);
    auto node = std::make_shared<Node>();
    node->value = std::move(init);
    node->grad = Tensor::zeros(node->value.shape());
    node->requires_grad = true;
    node->is_param = true;
    node->name = name;
    params_[name] = node;
    return node;
}

Var ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidArgument("ParamStore: unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_) p->grad = Tensor::zeros(p->value.shape());
}

std::size_t ParamStore::total_parameters() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p->value.size();
    return n;
}

double global_grad_norm(const ParamStore& store) {
    double sq = 0.0;
    for (const auto& [name, p] : store.params())
        for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    return std::sqrt(sq);
}

void clip_grad_norm(ParamStore& store, double max_norm) {
    const double norm = global_grad_norm(store);
    if (norm <= max_norm || norm == 0.0) return;
    const double factor = max_norm / norm;
    for (auto& [name, p] : store.params())
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= factor;
}

void Adam::step(ParamStore& store) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : store.params()) {
        auto& mom = moments_[name];
        if (mom.m.size() != p->value.size()) {
            mom.m = Tensor::zeros(p->value.shape());
            mom.v = Tensor::zeros(p->value.shape());
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = mom.m[i] / bc1;
            const double v_hat = mom.v[i] / bc2;
            p->value[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Tensor record file ("MAGK")
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'M', 'A', 'G', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
}  // namespace

void save_tensor_file(const std::string& path, const TensorFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorruptCheckpoint("save_tensor_file: cannot open " + path);
    binio::write_bytes(out, kMagic, 4);
    binio::write_pod<std::uint32_t>(out, kVersion);
    binio::write_string(out, file.config_json);
    binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(file.records.size()));
    for (const auto& [name, tensor] : file.records) {
        binio::write_string(out, name);
        binio::write_pod<std::uint8_t>(out, kDtypeF64);
        binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape())
            binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        binio::write_bytes(out, tensor.data(), tensor.size() * sizeof(double));
    }
    if (!out) throw CorruptCheckpoint("save_tensor_file: write failed for " + path);
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpoint("load_tensor_file: cannot open " + path);
    char magic[4];
    if (!binio::read_bytes(in, magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw CorruptCheckpoint("load_tensor_file: bad magic in " + path);
    std::uint32_t version = 0;
    if (!binio::read_pod(in, version) || version != kVersion)
        throw CorruptCheckpoint("load_tensor_file: unsupported version in " + path);
    TensorFile file;
    if (!binio::read_string(in, file.config_json))
        throw CorruptCheckpoint("load_tensor_file: truncated config in " + path);
    std::uint32_t count = 0;
    if (!binio::read_pod(in, count))
        throw CorruptCheckpoint("load_tensor_file: truncated record count in " + path);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name;
        if (!binio::read_string(in, name))
            throw CorruptCheckpoint("load_tensor_file: truncated record name in " + path);
        std::uint8_t dtype = 0;
        std::uint32_t rank = 0;
        if (!binio::read_pod(in, dtype) || dtype != kDtypeF64 || !binio::read_pod(in, rank) ||
            rank > 8)
            throw CorruptCheckpoint("load_tensor_file: bad record header for " + name);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::uint32_t v = 0;
            if (!binio::read_pod(in, v))
                throw CorruptCheckpoint("load_tensor_file: truncated dims for " + name);
            d = v;
        }
        Tensor t(shape);
        if (!binio::read_bytes(in, t.data(), t.size() * sizeof(double)))
            throw CorruptCheckpoint("load_tensor_file: truncated data for " + name);
        file.records.emplace(std::move(name), std::move(t));
    }
    return file;
}

}  // namespace mage::nn
