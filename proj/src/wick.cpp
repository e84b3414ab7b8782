#include "qftlab/wick.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace qftlab {

namespace {

Eigen::Index ipow(int d, int p) {
    Eigen::Index r = 1;
    for (int i = 0; i < p; ++i) r *= d;
    return r;
}

void decode(Eigen::Index idx, int d, int p, std::vector<int>& out) {
    out.resize(static_cast<std::size_t>(p));
    for (int i = p - 1; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(idx % d);
        idx /= d;
    }
}

Eigen::Index encode(const std::vector<int>& t, int d) {
    Eigen::Index r = 0;
    for (int k : t) r = r * d + k;
    return r;
}

// Stride of leg `leg` in a row-major tuple of length p.
Eigen::Index leg_stride(int d, int p, int leg) { return ipow(d, p - 1 - leg); }

// Data viewed as a column-major [inner, d, outer] array; returns
// out[i, k, o] = sum_l M(k, l) in[i, l, o].
cmat apply_middle(const cmat& w, Eigen::Index inner, int d, const cmat& M) {
    cmat out(w.rows(), w.cols());
    const Eigen::Index outer = w.size() / (inner * d);
    if (inner == 1) {
        Eigen::Map<cmat>(out.data(), d, outer).noalias() = M * Eigen::Map<const cmat>(w.data(), d, outer);
        return out;
    }
    const cmat mt = M.transpose();
    for (Eigen::Index o = 0; o < outer; ++o) {
        const Eigen::Index off = o * inner * d;
        Eigen::Map<cmat>(out.data() + off, inner, d).noalias() = Eigen::Map<const cmat>(w.data() + off, inner, d) * mt;
    }
    return out;
}

// (M on output leg) w : new(r, c) = sum_l M(k_leg(r), l) w(r[k_leg -> l], c).
cmat apply_row_leg(const cmat& w, int d, int p, int leg, const cmat& m) {
    return apply_middle(w, leg_stride(d, p, leg), d, m);
}

// w (M on input leg) : new(r, c) = sum_l w(r, c[k_leg -> l]) M(l, k_leg(c)).
cmat apply_col_leg(const cmat& w, int d, int q, int leg, const cmat& m) {
    return apply_middle(w, w.rows() * leg_stride(d, q, leg), d, m.transpose());
}

// Sum over one leg on the right: (w|h))[K; K''] = sum_j w[K; K'', j] h_j.
cmat contract_right_once(const cmat& w, int d, const cvec& h) {
    const Eigen::Index cols = w.cols() / d;
    cmat out = cmat::Zero(w.rows(), cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (int j = 0; j < d; ++j) out.col(c) += h(j) * w.col(c * d + j);
    return out;
}

// (h|w)[K''; K'] = sum_j conj(h_j) w[j, K''; K'].
cmat contract_left_once(const cmat& w, int d, const cvec& h) {
    const Eigen::Index rows = w.rows() / d;
    cmat out = cmat::Zero(rows, w.cols());
    for (int j = 0; j < d; ++j) out += std::conj(h(j)) * w.middleRows(j * rows, rows);
    return out;
}

// Row groups of tuples with the same multiset.
std::vector<std::vector<Eigen::Index>> orbits(int d, int p) {
    const Eigen::Index n = ipow(d, p);
    std::unordered_map<Eigen::Index, std::size_t> slot;
    std::vector<std::vector<Eigen::Index>> groups;
    std::vector<int> t;
    for (Eigen::Index i = 0; i < n; ++i) {
        decode(i, d, p, t);
        std::sort(t.begin(), t.end());
        const Eigen::Index key = encode(t, d);
        auto [it, fresh] = slot.try_emplace(key, groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    return groups;
}

void check_shape(int d, int p, int q, const cmat& data) {
    if (p < 0 || q < 0) throw std::invalid_argument("WickKernel: negative leg count");
    if (p + q > max_wick_degree)
        throw std::invalid_argument("WickKernel: degree " + std::to_string(p + q) + " exceeds the cap " +
                                    std::to_string(max_wick_degree));
    if (data.rows() != ipow(d, p) || data.cols() != ipow(d, q))
        throw std::invalid_argument("WickKernel: block (" + std::to_string(p) + "," + std::to_string(q) +
                                    ") must be " + std::to_string(ipow(d, p)) + "x" + std::to_string(ipow(d, q)));
}

double factorial(int n) {
    double r = 1;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

double choose(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

}  // namespace

cmat symmetrize_block(int d, int p, int q, const cmat& data) {
    check_shape(d, p, q, data);
    cmat out = data;
    if (p > 1) {
        for (const auto& g : orbits(d, p)) {
            if (g.size() == 1) continue;
            Eigen::RowVectorXcd mean = Eigen::RowVectorXcd::Zero(out.cols());
            for (auto r : g) mean += out.row(r);
            mean /= static_cast<double>(g.size());
            for (auto r : g) out.row(r) = mean;
        }
    }
    if (q > 1) {
        for (const auto& g : orbits(d, q)) {
            if (g.size() == 1) continue;
            cvec mean = cvec::Zero(out.rows());
            for (auto c : g) mean += out.col(c);
            mean /= static_cast<double>(g.size());
            for (auto c : g) out.col(c) = mean;
        }
    }
    return out;
}

WickKernel::WickKernel(int modes) : modes_(modes) {
    if (modes < 1) throw std::invalid_argument("WickKernel: need at least one mode");
}

int WickKernel::degree() const {
    int deg = 0;
    for (const auto& [key, b] : blocks_) deg = std::max(deg, key.first + key.second);
    return deg;
}

const cmat& WickKernel::block(int p, int q) const {
    auto it = blocks_.find({p, q});
    if (it == blocks_.end())
        throw std::out_of_range("WickKernel: no block (" + std::to_string(p) + "," + std::to_string(q) + ")");
    return it->second;
}

WickKernel& WickKernel::add_block(int p, int q, const cmat& data) {
    return set_block_symmetric(p, q, symmetrize_block(modes_, p, q, data));
}

WickKernel& WickKernel::set_block_symmetric(int p, int q, cmat data) {
    check_shape(modes_, p, q, data);
    auto it = blocks_.find({p, q});
    if (it == blocks_.end()) blocks_.emplace(Key{p, q}, std::move(data));
    else it->second += data;
    return *this;
}

double WickKernel::asymmetry_residual() const {
    double r = 0;
    for (const auto& [key, b] : blocks_)
        r = std::max(r, (b - symmetrize_block(modes_, key.first, key.second, b)).cwiseAbs().maxCoeff());
    return r;
}

double WickKernel::frobenius_norm() const {
    double s = 0;
    for (const auto& [key, b] : blocks_) s += b.squaredNorm();
    return std::sqrt(s);
}

WickKernel& WickKernel::operator+=(const WickKernel& o) {
    if (modes_ == 0) modes_ = o.modes_;
    if (o.modes_ != modes_ && !o.empty()) throw std::invalid_argument("WickKernel: mode count mismatch");
    for (const auto& [key, b] : o.blocks_) set_block_symmetric(key.first, key.second, b);
    return *this;
}

WickKernel& WickKernel::operator*=(cplx s) {
    for (auto& [key, b] : blocks_) b *= s;
    return *this;
}

WickKernel rank_one_11(const cvec& g, const cvec& h) {
    if (g.size() != h.size()) throw std::invalid_argument("rank_one_11: size mismatch");
    WickKernel w(static_cast<int>(g.size()));
    w.set_block_symmetric(1, 1, g * h.adjoint());
    return w;
}

WickKernel scalar_kernel(int modes, cplx c) {
    WickKernel w(modes);
    cmat b(1, 1);
    b(0, 0) = c;
    w.set_block_symmetric(0, 0, b);
    return w;
}

namespace {

// Number of distinct orderings of the sorted tuple encoded as idx.
double tuple_multiplicity(Eigen::Index idx, int d, int m) {
    std::vector<int> t;
    decode(idx, d, m, t);
    double mult = factorial(m);
    for (std::size_t a = 0; a < t.size();) {
        std::size_t b = a;
        while (b < t.size() && t[b] == t[a]) ++b;
        mult /= factorial(static_cast<int>(b - a));
        a = b;
    }
    return mult;
}

struct Multiset {
    std::vector<int> tuple;  // sorted mode indices
    double multiplicity;     // number of distinct orderings
};

void multisets_rec(int d, int m, int start, std::vector<int>& cur, std::vector<Multiset>& out) {
    if (static_cast<int>(cur.size()) == m) {
        double mult = factorial(m);
        for (std::size_t i = 0; i < cur.size();) {
            std::size_t j = i;
            while (j < cur.size() && cur[j] == cur[i]) ++j;
            mult /= factorial(static_cast<int>(j - i));
            i = j;
        }
        out.push_back({cur, mult});
        return;
    }
    for (int k = start; k < d; ++k) {
        cur.push_back(k);
        multisets_rec(d, m, k, cur, out);
        cur.pop_back();
    }
}

std::vector<Multiset> multisets(int d, int m) {
    std::vector<Multiset> out;
    std::vector<int> cur;
    multisets_rec(d, m, 0, cur, out);
    return out;
}

// Sub-multisets of size q of state i, reached by lowering along non-decreasing
// mode chains so that each multiset appears once.  Records the resulting basis
// index, the factor prod sqrt(n_k (n_k - 1) ...) of a_{K'}, and the tuple.
void lowerings(const OccupationBasis& b, Eigen::Index i, int q, int start, std::vector<int>& tuple, double factor,
               std::vector<std::tuple<Eigen::Index, double, Eigen::Index>>& out, int d) {
    if (q == 0) {
        out.emplace_back(i, factor, encode(tuple, d));
        return;
    }
    for (int k = start; k < d; ++k) {
        const int nk = b.occupation(i, k);
        if (nk == 0) continue;
        tuple.push_back(k);
        lowerings(b, b.lower(k, i), q - 1, k, tuple, factor * std::sqrt(static_cast<double>(nk)), out, d);
        tuple.pop_back();
    }
}

}  // namespace

FockOperator wick_assemble(const WickKernel& w, const OccupationBasis& basis) {
    const int d = basis.modes();
    if (w.modes() != d)
        throw std::invalid_argument("wick_assemble: kernel has " + std::to_string(w.modes()) + " modes, basis has " +
                                    std::to_string(d));
    const Eigen::Index dim = basis.dim();
    cmat m = cmat::Zero(dim, dim);
    std::vector<std::tuple<Eigen::Index, double, Eigen::Index>> lows;
    std::vector<int> tuple;
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        if (p > basis.n_max() || q > basis.n_max()) continue;
        const auto outs = multisets(d, p);
        // Fixed summation order: blocks by key, states ascending, lowerings in
        // mode order, output multisets in lexicographic order.
        for (Eigen::Index i = 0; i < dim; ++i) {
            const int t = basis.total(i);
            if (t < q || t - q + p > basis.n_max()) continue;
            lows.clear();
            tuple.clear();
            lowerings(basis, i, q, 0, tuple, 1.0, lows, d);
            for (const auto& [l, fa, col] : lows) {
                const double in_mult = tuple_multiplicity(col, d, q);
                for (const auto& ms : outs) {
                    Eigen::Index target = l;
                    double fc = 1.0;
                    for (int k : ms.tuple) {
                        fc *= std::sqrt(static_cast<double>(basis.occupation(target, k) + 1));
                        target = basis.raise(k, target);
                    }
                    const cplx coeff = blk(encode(ms.tuple, d), col);
                    if (coeff == cplx(0.0)) continue;
                    m(target, i) += coeff * (ms.multiplicity * in_mult * fa * fc);
                }
            }
        }
    }
    bool herm = false;
    {
        const WickKernel adj = wick_adjoint(w);
        double diff = 0;
        for (const auto& [key, b] : w.blocks()) {
            if (!adj.has_block(key.first, key.second)) {
                diff = 1;
                break;
            }
            diff = std::max(diff, (b - adj.block(key.first, key.second)).cwiseAbs().maxCoeff());
        }
        for (const auto& [key, b] : adj.blocks())
            if (!w.has_block(key.first, key.second)) diff = 1;
        herm = diff <= 1e-14;
    }
    return {basis, std::move(m), herm};
}

WickKernel wick_adjoint(const WickKernel& w) {
    WickKernel out(w.modes());
    for (const auto& [key, b] : w.blocks()) out.set_block_symmetric(key.second, key.first, b.adjoint());
    return out;
}

WickKernel commutator_with_dgamma(const cmat& b, const WickKernel& w) {
    const int d = w.modes();
    if (b.rows() != d || b.cols() != d) throw std::invalid_argument("commutator_with_dgamma: size mismatch");
    WickKernel out(d);
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        cmat acc = cmat::Zero(blk.rows(), blk.cols());
        for (int leg = 0; leg < p; ++leg) acc += apply_row_leg(blk, d, p, leg, b);
        for (int leg = 0; leg < q; ++leg) acc -= apply_col_leg(blk, d, q, leg, b);
        out.set_block_symmetric(p, q, std::move(acc));
    }
    return out;
}

WickKernel gamma_conjugation(const cmat& q, const WickKernel& w) {
    const int d = w.modes();
    if (q.rows() != d || q.cols() != d) throw std::invalid_argument("gamma_conjugation: size mismatch");
    if ((q.adjoint() * q - cmat::Identity(d, d)).norm() > 1e-10)
        throw std::invalid_argument("gamma_conjugation: q is not unitary");
    const cmat qa = q.adjoint();
    WickKernel out(d);
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, nq] = key;
        cmat acc = blk;
        for (int leg = 0; leg < p; ++leg) acc = apply_row_leg(acc, d, p, leg, q);
        for (int leg = 0; leg < nq; ++leg) acc = apply_col_leg(acc, d, nq, leg, qa);
        out.set_block_symmetric(p, nq, std::move(acc));
    }
    return out;
}

WickKernel contract(const WickKernel& w, const cvec& h, ContractSide side, int count, bool strict) {
    const int d = w.modes();
    if (h.size() != d) throw std::invalid_argument("contract: vector size mismatch");
    if (count < 0) throw std::invalid_argument("contract: negative count");
    WickKernel out(d);
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        const int avail = side == ContractSide::left ? p : q;
        if (count > avail) {
            if (strict)
                throw std::invalid_argument("contract: block (" + std::to_string(p) + "," + std::to_string(q) +
                                            ") has only " + std::to_string(avail) + " legs on that side");
            continue;
        }
        cmat acc = blk;
        for (int c = 0; c < count; ++c)
            acc = side == ContractSide::left ? contract_left_once(acc, d, h) : contract_right_once(acc, d, h);
        if (side == ContractSide::left) out.set_block_symmetric(p - count, q, std::move(acc));
        else out.set_block_symmetric(p, q - count, std::move(acc));
    }
    return out;
}

WickKernel commutator_with_creation(const WickKernel& w, const cvec& h) {
    WickKernel out(w.modes());
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        if (q == 0) continue;
        out.set_block_symmetric(p, q - 1, static_cast<double>(q) * contract_right_once(blk, w.modes(), h));
    }
    return out;
}

WickKernel commutator_with_annihilation(const WickKernel& w, const cvec& h) {
    WickKernel out(w.modes());
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        if (p == 0) continue;
        out.set_block_symmetric(p - 1, q, -static_cast<double>(p) * contract_left_once(blk, w.modes(), h));
    }
    return out;
}

WickKernel weyl_conjugation(const WickKernel& w, const cvec& h) {
    const int d = w.modes();
    if (h.size() != d) throw std::invalid_argument("weyl_conjugation: vector size mismatch");
    const cplx up = I_unit / std::sqrt(2.0);    // each contracted creation leg
    const cplx down = -I_unit / std::sqrt(2.0); // each contracted annihilation leg
    WickKernel out(d);
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        // Left contractions first, cached per count.
        cmat left = blk;
        for (int s = p; s >= 0; --s) {
            cmat both = left;
            for (int r = q; r >= 0; --r) {
                const cplx c = choose(p, s) * choose(q, r) * std::pow(up, p - s) * std::pow(down, q - r);
                out.set_block_symmetric(s, r, c * both);
                if (r > 0) both = contract_right_once(both, d, h);
            }
            if (s > 0) left = contract_left_once(left, d, h);
        }
    }
    return out;
}

WeylResidual weyl_conjugation_residual(const WickKernel& w, const cvec& h, const OccupationBasis& basis, int sector) {
    const cmat wp = weyl_operator(basis, h).mat;
    const cmat wm = weyl_operator(basis, cvec(-h)).mat;
    const cmat lhs = wp * wick_assemble(w, basis).mat * wm;
    const cmat rhs = wick_assemble(weyl_conjugation(w, h), basis).mat;
    const Eigen::Index k = basis.sector_begin(sector + 1);
    WeylResidual res;
    res.sector = sector;
    res.residual = op_norm(cmat((lhs - rhs).topLeftCorner(k, k)));
    res.operator_norm = op_norm(cmat(rhs.topLeftCorner(k, k)));
    return res;
}

double interleave_norm(const cmat& a_1p, const WickKernel& w) {
    const int d = w.modes();
    if (a_1p.rows() != d || a_1p.cols() != d) throw std::invalid_argument("interleave_norm: size mismatch");
    const cmat a_in = a_1p.adjoint();  // conj(a) on an input index, in apply_col_leg's layout
    double total = 0;
    for (const auto& [key, blk] : w.blocks()) {
        const auto [p, q] = key;
        for (int leg = 0; leg < p; ++leg) total += apply_row_leg(blk, d, p, leg, a_1p).norm();
        for (int leg = 0; leg < q; ++leg) total += apply_col_leg(blk, d, q, leg, a_in).norm();
    }
    return total;
}

InterleaveTable decay_probe_Is(const WickKernel& w, const Profile& j_profile, const std::vector<double>& R_list,
                               const ModeSpace& modes) {
    if (w.modes() != modes.dim) throw std::invalid_argument("decay_probe_Is: mode count mismatch");
    InterleaveTable t;
    std::vector<double> rs, ns;
    const rvec& wd = modes.model->weight_diag;
    for (double R : R_list) {
        if (!(R > 0)) throw std::invalid_argument("decay_probe_Is: R must be positive");
        rvec diag(wd.size());
        for (Eigen::Index i = 0; i < wd.size(); ++i) diag(i) = j_profile(wd(i) / R);
        const double n = interleave_norm(modes.compress_diagonal(diag), w);
        t.rows.push_back({R, n});
        rs.push_back(R);
        ns.push_back(n);
    }
    t.fitted_exponent = loglog_slope(rs, ns, 1e-13);
    return t;
}

void write_kernel(std::ostream& os, const WickKernel& w) {
    os << "qftlab-wick-kernel v1\n";
    os << "modes " << w.modes() << "\n";
    os << "blocks " << w.blocks().size() << "\n";
    std::ostringstream line;
    for (const auto& [key, b] : w.blocks()) {
        os << "block " << key.first << " " << key.second << "\n";
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            for (Eigen::Index c = 0; c < b.cols(); ++c) {
                char buf[80];
                std::snprintf(buf, sizeof buf, "%.17g %.17g\n", b(r, c).real(), b(r, c).imag());
                os << buf;
            }
    }
}

WickKernel read_kernel(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "qftlab-wick-kernel v1")
        throw std::runtime_error("read_kernel: missing or unsupported header");
    std::string tag;
    int d = 0;
    std::size_t count = 0;
    if (!(is >> tag >> d) || tag != "modes" || d < 1) throw std::runtime_error("read_kernel: bad modes line");
    if (!(is >> tag >> count) || tag != "blocks") throw std::runtime_error("read_kernel: bad blocks line");
    WickKernel w(d);
    for (std::size_t n = 0; n < count; ++n) {
        int p = 0, q = 0;
        if (!(is >> tag >> p >> q) || tag != "block") throw std::runtime_error("read_kernel: bad block header");
        if (p < 0 || q < 0 || p + q > max_wick_degree) throw std::runtime_error("read_kernel: bad block order");
        cmat b(ipow(d, p), ipow(d, q));
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            for (Eigen::Index c = 0; c < b.cols(); ++c) {
                double re = 0, im = 0;
                if (!(is >> re >> im)) throw std::runtime_error("read_kernel: truncated block data");
                b(r, c) = cplx(re, im);
            }
        w.set_block_symmetric(p, q, std::move(b));
    }
    return w;
}

WickKernel random_kernel(int modes, int degree, std::mt19937_64& rng, bool hermitian) {
    if (degree < 0 || degree > max_wick_degree) throw std::invalid_argument("random_kernel: bad degree");
    std::normal_distribution<double> nd(0.0, 1.0);
    WickKernel w(modes);
    for (int p = 0; p <= degree; ++p)
        for (int q = 0; p + q <= degree; ++q) {
            cmat b(ipow(modes, p), ipow(modes, q));
            for (Eigen::Index r = 0; r < b.rows(); ++r)
                for (Eigen::Index c = 0; c < b.cols(); ++c) b(r, c) = cplx(nd(rng), nd(rng));
            w.add_block(p, q, b);
        }
    if (hermitian) {
        WickKernel h = wick_adjoint(w);
        w += h;
        w *= 0.5;
    }
    return w;
}

}  // namespace qftlab
