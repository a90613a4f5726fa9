// registration.hpp - rigid centroid pre-alignment plus the FFD and BSD deformable engines.
//
// Both engines maximize Parzen-window mutual information over a coarse-to-fine
// schedule. At level L (0 = coarsest) images are downsampled by 2^(levels-1-L)
// and the B-spline mesh spacing is mesh_spacing / 2^L.
//
//  * FFD: displacement u = B c on a cubic B-spline lattice, gradient ascent on c
//    of MI - bending_weight * bending energy.
//  * BSD: one stationary velocity v split into half trajectories, exp(v/2) for the
//    moving image and exp(-v/2) for the fixed one, so both meet at a midpoint. Each
//    iteration projects the voxelwise MI force onto the lattice (least squares),
//    steps v and exponentiates by scaling and squaring.
//    forward = exp(v/2) o exp(v/2), inverse = exp(-v/2) o exp(-v/2).
//
// Similarity is evaluated off a 2-voxel border band. A step is kept only when the
// objective rises, the Parzen MI stays at or above the level's starting value and
// the hard-binned MI strictly exceeds its starting value.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blendreg/bspline.hpp"
#include "blendreg/field.hpp"
#include "blendreg/image.hpp"

namespace blendreg {

enum class Engine { bsd, ffd };
enum class Channel { blend, pet, ct };

Engine parse_engine(const std::string &s);
Channel parse_channel(const std::string &s);
const char *to_string(Engine e);
const char *to_string(Channel c);

struct RegistrationConfig {
    int levels = 3;
    double mesh_spacing = 32.0;          ///< coarsest-level control spacing, mm
    double step_size = 0.15;             ///< max update per iteration, in voxels of the level
    std::vector<int> iterations{100, 70, 40};
    int mi_bins = 32;
    double rigidity_weight = 0.0;
    std::optional<Mask3D> rigidity_mask; ///< defaults to the fixed tumor mask in register_pair
    int rigidity_iterations = 30;        ///< iterations of the single-level rigidity pre-pass
    double crop_margin = 50.0;           ///< mm around the tumor bounding box
    double geodesic_weight = 0.01;       ///< BSD velocity-norm penalty
    double bending_weight = 0.5;         ///< FFD bending-energy penalty
    int squarings = 6;
    double min_step = 1e-4;              ///< step-size underflow for Jacobian rejections
    int convergence_halvings = 5;        ///< level stops once the step has shrunk 2^n-fold

    void validate() const;

    /// Published per-channel defaults: mesh 32 mm (blend, pet) or 16 mm (ct).
    static RegistrationConfig defaults_for(Channel channel);
};

struct CostTerms {
    int level = 0;
    double similarity = 0.0; ///< MI, nats
    double geodesic = 0.0;   ///< mean squared velocity norm (voxels^2)
    double regularizer = 0.0;///< weighted bending or rigidity energy
};

struct RegistrationResult {
    DeformationField forward_field;  ///< fixed point x -> moving point x + u(x)
    DeformationField inverse_field;  ///< moving point y -> fixed point y + v(y)
    std::vector<CostTerms> cost_trace;
    bool converged = false;
    double finest_initial_mi = 0.0;
    double finest_final_mi = 0.0;
};

class DivergedError : public std::runtime_error {
public:
    DivergedError(const std::string &what, std::vector<CostTerms> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const std::vector<CostTerms> &trace() const { return trace_; }

private:
    std::vector<CostTerms> trace_;
};

/// centroid(moving) - centroid(fixed) in mm.
Vec3 rigid_center_align(const Mask3D &fixed_mask, const Mask3D &moving_mask);

/// Mean over mask voxels of |A^T A - I|_F^2 + (det A - 1)^2 with A = I + grad u.
double rigidity_penalty(const DeformationField &field, const Mask3D &mask);

RegistrationResult register_ffd(const Image3D &fixed, const Image3D &moving, const RegistrationConfig &cfg);
RegistrationResult register_bsd(const Image3D &fixed, const Image3D &moving, const RegistrationConfig &cfg);

/// Full pipeline for one pair: centroid translation, crop around the fixed mask,
/// optional rigidity pre-pass, deformable engine, and re-embedding on the fixed grid.
RegistrationResult register_pair(const Image3D &fixed, const Image3D &moving, const Mask3D &fixed_mask,
                                 const Mask3D &moving_mask, Engine engine, RegistrationConfig cfg);

/// MI similarity and its analytic gradient with respect to the FFD coefficients.
struct FfdSimilarity {
    double value = 0.0;
    BSplineLattice::Coefficients gradient;
};

/// Evaluates MI(fixed, moving o (id + B c)); the gradient uses the exact derivative
/// of the trilinear interpolant at each sample point.
FfdSimilarity ffd_similarity(const Image3D &fixed, const Image3D &moving, const BSplineLattice &lattice,
                             std::span<const Vec3> coeffs, int bins);

} // namespace blendreg
