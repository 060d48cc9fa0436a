#pragma once

#include <cmath>
#include <cstddef>

namespace meldctl {

/* First-order dual number over an arbitrary scalar S. Nesting Dual<Dual<...>>
 * carries higher directional derivatives; value paths perform exactly the same
 * floating-point operations as an unlifted evaluation, so order-0 extraction
 * is bitwise identical to a plain run. */
template <class S>
struct Dual {
    S v{};  // value part
    S d{};  // derivative part

    constexpr Dual() = default;
    constexpr Dual(double value) : v(value), d(0.0) {}  // NOLINT: lifts constants
    constexpr Dual(S value, S deriv) : v(std::move(value)), d(std::move(deriv)) {}
};

inline constexpr double value_of(double x) { return x; }
template <class S>
constexpr double value_of(const Dual<S>& x) { return value_of(x.v); }

inline bool all_finite(double x) { return std::isfinite(x); }
template <class S>
bool all_finite(const Dual<S>& x) { return all_finite(x.v) && all_finite(x.d); }

template <class S>
constexpr Dual<S> operator+(const Dual<S>& a, const Dual<S>& b) {
    return {a.v + b.v, a.d + b.d};
}
template <class S>
constexpr Dual<S> operator-(const Dual<S>& a, const Dual<S>& b) {
    return {a.v - b.v, a.d - b.d};
}
template <class S>
constexpr Dual<S> operator-(const Dual<S>& a) {
    return {-a.v, -a.d};
}
template <class S>
constexpr Dual<S> operator*(const Dual<S>& a, const Dual<S>& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class S>
constexpr Dual<S> operator/(const Dual<S>& a, const Dual<S>& b) {
    S q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
}

template <class S>
constexpr Dual<S> operator+(const Dual<S>& a, double b) { return a + Dual<S>(b); }
template <class S>
constexpr Dual<S> operator+(double a, const Dual<S>& b) { return Dual<S>(a) + b; }
template <class S>
constexpr Dual<S> operator-(const Dual<S>& a, double b) { return a - Dual<S>(b); }
template <class S>
constexpr Dual<S> operator-(double a, const Dual<S>& b) { return Dual<S>(a) - b; }
template <class S>
constexpr Dual<S> operator*(const Dual<S>& a, double b) { return {a.v * b, a.d * b}; }
template <class S>
constexpr Dual<S> operator*(double a, const Dual<S>& b) { return {b.v * a, b.d * a}; }
template <class S>
constexpr Dual<S> operator/(const Dual<S>& a, double b) { return {a.v / b, a.d / b}; }
template <class S>
constexpr Dual<S> operator/(double a, const Dual<S>& b) { return Dual<S>(a) / b; }

template <class S>
Dual<S>& operator+=(Dual<S>& a, const Dual<S>& b) { a = a + b; return a; }
template <class S>
Dual<S>& operator-=(Dual<S>& a, const Dual<S>& b) { a = a - b; return a; }
template <class S>
Dual<S>& operator*=(Dual<S>& a, const Dual<S>& b) { a = a * b; return a; }
template <class S>
Dual<S>& operator+=(Dual<S>& a, double b) { a.v = a.v + b; return a; }
template <class S>
Dual<S>& operator-=(Dual<S>& a, double b) { a.v = a.v - b; return a; }
template <class S>
Dual<S>& operator*=(Dual<S>& a, double b) { a = a * b; return a; }

template <class S>
Dual<S> sin(const Dual<S>& x) {
    using std::cos;
    using std::sin;
    return {sin(x.v), cos(x.v) * x.d};
}
template <class S>
Dual<S> cos(const Dual<S>& x) {
    using std::cos;
    using std::sin;
    return {cos(x.v), S(-1.0) * sin(x.v) * x.d};
}
template <class S>
Dual<S> sqrt(const Dual<S>& x) {
    using std::sqrt;
    S r = sqrt(x.v);
    return {r, x.d / (2.0 * r)};
}
template <class S>
Dual<S> exp(const Dual<S>& x) {
    using std::exp;
    S e = exp(x.v);
    return {e, e * x.d};
}

/* Nested tower: NestedDualT<K> carries K stacked derivative directions. */
template <int K>
struct NestedDual {
    using type = Dual<typename NestedDual<K - 1>::type>;
};
template <>
struct NestedDual<0> {
    using type = double;
};
template <int K>
using NestedDualT = typename NestedDual<K>::type;

}  // namespace meldctl
