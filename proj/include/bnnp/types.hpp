#pragma once

#include <Eigen/Dense>

namespace bnnp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A flat parameter vector; its layout is owned by the Mlp that interprets it.
using ParamVector = Vector;

using VectorRef = Eigen::Ref<const Vector>;

}  // namespace bnnp
