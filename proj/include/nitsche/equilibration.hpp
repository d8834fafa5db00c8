#pragma once

#include "nitsche/assembly.hpp"

namespace nitsche {

// Piecewise linear 2x2 matrix field stored by its values at the element vertices.
struct StressField {
  std::vector<std::array<Mat2, 3>> nodal;

  explicit StressField(int elements = 0) : nodal(elements, {Mat2::Zero(), Mat2::Zero(), Mat2::Zero()}) {}
  Mat2 value(int t, const std::array<double, 3>& bary) const;
  Vec2 divergence(const Mesh& mesh, int t) const; // row-wise, constant per element
  StressField operator+(const StressField& o) const;
};

using Rigid = Eigen::Vector3d; // b1, b2, c of b + c (x2 - a2, a1 - x1) / h

// Contact tractions at the face quadrature points: the discrete part
// [P^n]_- n + [P^t]_S t and the linearisation part (P_lin - P_dis).
struct ContactTractions {
  std::vector<int> face_slot;                 // face -> slot, -1 off the contact boundary
  std::vector<std::vector<Vec2>> dis, lin;    // per slot, per quadrature point
};

ContactTractions contact_tractions(const FeFunction& u_k, const FeFunction& u_prev,
                                   const ProblemData& data);

struct EquilibrationOptions {
  int threads = 1;
  // Redistribute the rotational part of the patch loads so that every patch
  // problem is exactly compatible.
  bool balance_rotations = true;
};

struct PatchSolution {
  int vertex = -1;
  std::vector<int> elements;
  std::vector<std::array<Mat2, 3>> dis, lin; // per patch element
  Rigid y = Rigid::Zero();
  bool constrained = false;    // divergence tested against rigid-motion-free functions
  double multiplier = 0.0;     // size of the rigid-motion multipliers
  double rcond = 0.0;
  // Loads actually used: element means of the divergence right-hand sides.
  std::vector<Vec2> load_dis, load_lin;
};

struct StressReconstruction {
  StressField dis, lin;
  std::vector<Rigid> y;            // per vertex
  std::vector<double> multiplier;  // per vertex
  std::vector<char> constrained;   // per vertex
  double rotation_defect = 0.0;    // largest patch incompatibility before balancing

  StressField total() const { return dis + lin; }
};

// Shared inputs of all patch problems of one Newton iterate.
class EquilibrationContext {
public:
  EquilibrationContext(const FeFunction& u_k, const FeFunction& u_prev, const ProblemData& data,
                       const EquilibrationOptions& opts = {});

  const Mesh& mesh() const { return *mesh_; }
  int num_vertices() const { return mesh_->num_vertices(); }
  PatchSolution solve_patch(int a) const;
  const ContactTractions& tractions() const { return tractions_; }
  double rotation_defect() const { return rotation_defect_; }

  // ell_a(z) = (mean load, z) - boundary data moments, per vertex (zero rows when unconstrained).
  const std::vector<Rigid>& incompatibility() const { return incompat_; }

  struct PatchGeometry;

private:
  PatchGeometry geometry(int a) const;
  void balance();

  std::shared_ptr<const Mesh> mesh_;
  const ProblemData* data_;
  EquilibrationOptions opts_;
  std::vector<Mat2> sigma_h_;               // stress of u_k, per element
  std::vector<std::array<Vec2, 3>> psi_f_;  // integral of lambda_i f, per element
  ContactTractions tractions_;
  std::vector<std::array<Vec2, 3>> q_;      // load corrections per (element, local vertex)
  std::vector<Rigid> incompat_;
  double rotation_defect_ = 0.0;
};

StressReconstruction reconstruct(const FeFunction& u_k, const FeFunction& u_prev,
                                 const ProblemData& data, const EquilibrationOptions& opts = {});

struct EquilibrationCheck {
  double continuity = 0.0;
  double equilibrium = 0.0;
  double neumann = 0.0;
  double contact_dis_n = 0.0, contact_dis_t = 0.0;
  double contact_lin_n = 0.0, contact_lin_t = 0.0;
  double weak_symmetry = 0.0;

  double worst() const;
};

EquilibrationCheck verify_equilibration(const StressReconstruction& rec, const FeFunction& u_k,
                                        const FeFunction& u_prev, const ProblemData& data);

// Simple static-chunk parallel loop; results must not depend on the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace nitsche
