#pragma once

// Orthogonal-embedding logit model linking per-document attention to the
// answer distribution.
//
//   h_last   = h_init + sum_j L * abar_j * kappa_j * e_d[j] + noise
//   logit_j  = <h_last, e_d[j]> + <h_last, e_y[j]> + b_j
//   P        = softmax(logit)
//
// Value vectors are layer-constant (kappa_j * e_d[j]) and cross-document terms
// vanish under orthogonality. Doc and answer-token embeddings are standard
// basis vectors in dimension 2k+1; the spare axis carries h_init.

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "attnbasin/error.hpp"

namespace attnbasin {

template <typename Scalar = double>
struct TheoryModel {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Matrix doc_embeddings;    // [m, k], column j is e_d[j]
    Matrix token_embeddings;  // [m, k], column j is e_y[j]
    Vector value_gains;       // kappa, [k]
    Vector h_init;            // [m]
    Vector biases;            // [k]
    Vector noise;             // [m], zero unless injected
    Eigen::Index n_layers = 1;

    Eigen::Index k() const { return doc_embeddings.cols(); }
    Eigen::Index dim() const { return doc_embeddings.rows(); }

    static TheoryModel standard(Eigen::Index k, Eigen::Index n_layers, const Vector& kappa, const Vector& biases,
                                Scalar h_init_scale = Scalar(1)) {
        if (k < 1) throw InvalidArgument("theory model needs k >= 1");
        const Eigen::Index m = 2 * k + 1;
        TheoryModel model;
        model.doc_embeddings = Matrix::Zero(m, k);
        model.token_embeddings = Matrix::Zero(m, k);
        for (Eigen::Index j = 0; j < k; ++j) {
            model.doc_embeddings(j, j) = Scalar(1);
            model.token_embeddings(k + j, j) = Scalar(1);
        }
        model.value_gains = kappa;
        model.biases = biases;
        model.h_init = Vector::Zero(m);
        model.h_init(2 * k) = h_init_scale;
        model.noise = Vector::Zero(m);
        model.n_layers = n_layers;
        validate(model);
        return model;
    }

    static TheoryModel standard(Eigen::Index k, Eigen::Index n_layers) {
        return standard(k, n_layers, Vector::Ones(k), Vector::Zero(k));
    }

    template <typename Other>
    TheoryModel<Other> cast() const {
        TheoryModel<Other> out;
        out.doc_embeddings = doc_embeddings.template cast<Other>();
        out.token_embeddings = token_embeddings.template cast<Other>();
        out.value_gains = value_gains.template cast<Other>();
        out.h_init = h_init.template cast<Other>();
        out.biases = biases.template cast<Other>();
        out.noise = noise.template cast<Other>();
        out.n_layers = n_layers;
        return out;
    }

    // Orthonormality of all 2k embeddings to 1e-10, positive gains, consistent shapes.
    static void validate(const TheoryModel& model) {
        const Eigen::Index k = model.k();
        const Eigen::Index m = model.dim();
        if (k < 1 || model.token_embeddings.rows() != m || model.token_embeddings.cols() != k ||
            model.value_gains.size() != k || model.biases.size() != k || model.h_init.size() != m ||
            model.noise.size() != m) {
            throw InvalidArgument("theory model components have inconsistent shapes");
        }
        if (model.n_layers < 1) throw InvalidArgument("theory model needs at least one layer");
        for (Eigen::Index j = 0; j < k; ++j) {
            if (!(model.value_gains(j) > Scalar(0))) throw InvalidArgument("value gains must be positive");
        }
        Matrix all(m, 2 * k);
        all << model.doc_embeddings, model.token_embeddings;
        const Matrix gram = all.transpose() * all;
        const Matrix off = gram - Matrix::Identity(2 * k, 2 * k);
        using std::abs;
        if (!(abs(off.cwiseAbs().maxCoeff()) <= Scalar(1e-10))) {
            throw InvalidArgument("embeddings are not orthonormal within 1e-10");
        }
    }
};

using TheoryModeld = TheoryModel<double>;

template <typename Scalar>
typename TheoryModel<Scalar>::Vector hidden_state(const TheoryModel<Scalar>& model,
                                                   const typename TheoryModel<Scalar>::Vector& alpha_bar) {
    if (alpha_bar.size() != model.k()) throw InvalidArgument("alpha_bar length must equal k");
    for (Eigen::Index j = 0; j < alpha_bar.size(); ++j) {
        if (!(alpha_bar(j) >= Scalar(0))) throw InvalidArgument("attention weights must be non-negative");
    }
    const Scalar layers = Scalar(model.n_layers);
    typename TheoryModel<Scalar>::Vector h = model.h_init + model.noise;
    for (Eigen::Index j = 0; j < model.k(); ++j) {
        h += (layers * alpha_bar(j) * model.value_gains(j)) * model.doc_embeddings.col(j);
    }
    return h;
}

template <typename Scalar>
typename TheoryModel<Scalar>::Vector answer_logits(const TheoryModel<Scalar>& model,
                                                    const typename TheoryModel<Scalar>::Vector& alpha_bar) {
    const auto h = hidden_state(model, alpha_bar);
    return (model.doc_embeddings.transpose() * h + model.token_embeddings.transpose() * h + model.biases).eval();
}

template <typename Scalar>
typename TheoryModel<Scalar>::Vector softmax(const typename TheoryModel<Scalar>::Vector& logits) {
    using std::exp;
    const Scalar top = logits.maxCoeff();
    typename TheoryModel<Scalar>::Vector p = logits.unaryExpr([&](Scalar z) { return exp(z - top); });
    return p / p.sum();
}

// Probability of each document's answer token given cross-layer mean attention.
template <typename Scalar>
typename TheoryModel<Scalar>::Vector answer_distribution(const TheoryModel<Scalar>& model,
                                                          const typename TheoryModel<Scalar>::Vector& alpha_bar) {
    return softmax<Scalar>(answer_logits(model, alpha_bar));
}

// dP(y_target)/d abar_j for every j, exact softmax gradient:
//   j == target: L kappa_j P_t (1 - P_t)
//   j != target: -L kappa_j P_t P_j
// (1 - P_t) is accumulated as the sum of the other probabilities so it does
// not cancel to zero when P_t is close to 1.
template <typename Scalar>
typename TheoryModel<Scalar>::Vector attention_gradient(const TheoryModel<Scalar>& model,
                                                         const typename TheoryModel<Scalar>::Vector& alpha_bar,
                                                         Eigen::Index target) {
    if (target < 0 || target >= model.k()) throw InvalidArgument("target document out of range");
    const auto p = answer_distribution(model, alpha_bar);
    const Scalar layers = Scalar(model.n_layers);
    Scalar rest = Scalar(0);
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        if (j != target) rest += p(j);
    }
    typename TheoryModel<Scalar>::Vector grad(model.k());
    for (Eigen::Index j = 0; j < model.k(); ++j) {
        grad(j) = j == target ? layers * model.value_gains(j) * p(target) * rest
                              : -layers * model.value_gains(j) * p(target) * p(j);
    }
    return grad;
}

}  // namespace attnbasin
