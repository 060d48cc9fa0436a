#include "meldctl/meld.hpp"

#include <algorithm>
#include <sstream>

#include "meldctl/report.hpp"

namespace meldctl {

Choice Choice::from_indices(const std::vector<int>& idx, int q) {
    if (q < 1 || q > kMaxDeck) throw SizeOverflow("deck size " + std::to_string(q));
    Choice c;
    c.indices = idx;
    std::sort(c.indices.begin(), c.indices.end());
    for (std::size_t k = 0; k < c.indices.size(); ++k) {
        int i = c.indices[k];
        if (i < 0 || i >= q) throw IndexOutOfRange("output " + std::to_string(i));
        if (k > 0 && c.indices[k - 1] == i)
            throw DimensionMismatch("repeated output " + std::to_string(i));
        c.bits |= 1u << i;
    }
    return c;
}

Choice Choice::from_bits(std::uint32_t bits, int q) {
    if (q < 1 || q > kMaxDeck) throw SizeOverflow("deck size " + std::to_string(q));
    if (bits >> q) throw IndexOutOfRange("bits exceed deck size");
    Choice c;
    c.bits = bits;
    for (int i = 0; i < q; ++i)
        if ((bits >> i) & 1u) c.indices.push_back(i);
    return c;
}

std::vector<Choice> square_choices(int q, int p) {
    if (p < 1 || p >= q || q > kMaxDeck)
        throw DimensionMismatch("need 1 <= p < q <= " + std::to_string(kMaxDeck));
    // C(q,p) with early cutoff against the enumeration cap.
    double count = 1.0;
    for (int i = 1; i <= p; ++i) count = count * (q - p + i) / i;
    if (count > static_cast<double>(kMaxEnumeration))
        throw SizeOverflow("choice count exceeds " + std::to_string(kMaxEnumeration));

    std::vector<Choice> out;
    out.reserve(static_cast<std::size_t>(count + 0.5));
    std::vector<int> idx(p);
    for (int i = 0; i < p; ++i) idx[i] = i;
    while (true) {
        Choice c;
        c.indices = idx;
        for (int i : idx) c.bits |= 1u << i;
        out.push_back(std::move(c));
        int k = p - 1;
        while (k >= 0 && idx[k] == q - p + k) --k;
        if (k < 0) break;
        ++idx[k];
        for (int j = k + 1; j < p; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

SelectionMatrix selection_matrix(const Choice& sigma, int q) {
    for (int i : sigma.indices)
        if (i >= q) throw IndexOutOfRange("output " + std::to_string(i));
    return SelectionMatrix{q, sigma.indices};
}

Eigen::MatrixXd SelectionMatrix::dense() const {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<int>(rows.size()), q);
    for (std::size_t k = 0; k < rows.size(); ++k) G(static_cast<int>(k), rows[k]) = 1.0;
    return G;
}

Eigen::VectorXd SelectionMatrix::apply(const Eigen::VectorXd& v) const {
    if (v.size() != q) throw DimensionMismatch("selection expects length " + std::to_string(q));
    Eigen::VectorXd out(static_cast<int>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<int>(k)) = v(rows[k]);
    return out;
}

Eigen::MatrixXd SelectionMatrix::apply(const Eigen::MatrixXd& m) const {
    if (m.rows() != q) throw DimensionMismatch("selection expects " + std::to_string(q) + " rows");
    Eigen::MatrixXd out(static_cast<int>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<int>(k)) = m.row(rows[k]);
    return out;
}

void write_choice_csv(std::ostream& os, const std::vector<MeldCertificate>& certs) {
    os << "sigma_bits,degree_sum,det_A,cond_A,is_meld,reject_reason\n";
    for (const auto& c : certs) {
        os << c.sigma.bits << ',' << c.degree_sum << ',' << fmt_g17(c.det_A) << ','
           << fmt_g17(c.cond_A) << ',' << (c.is_meld ? 1 : 0) << ',' << c.reject_reason << '\n';
    }
}

}  // namespace meldctl
