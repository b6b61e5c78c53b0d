#pragma once

// Orthogonal wavelet filter tables. Only the decomposition low-pass is stored;
// the high-pass and reconstruction filters are derived from it.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/error.hpp"

namespace denoise::wavelet {

enum class Family { haar, db5, db10, db15, sym5, sym10, sym15, coif3, coif4 };

inline constexpr std::array<Family, 9> kAllFamilies = {Family::haar, Family::db5,   Family::db10,
                                                       Family::db15, Family::sym5,  Family::sym10,
                                                       Family::sym15, Family::coif3, Family::coif4};

inline std::string_view to_string(Family f) {
    switch (f) {
        case Family::haar: return "haar";
        case Family::db5: return "db5";
        case Family::db10: return "db10";
        case Family::db15: return "db15";
        case Family::sym5: return "sym5";
        case Family::sym10: return "sym10";
        case Family::sym15: return "sym15";
        case Family::coif3: return "coif3";
        case Family::coif4: return "coif4";
    }
    return "?";
}

inline Family parse_family(std::string_view s) {
    for (Family f : kAllFamilies)
        if (to_string(f) == s) return f;
    throw InvalidArgument("unknown wavelet family '" + std::string(s) + "'");
}

namespace tables {

inline constexpr std::array<double, 2> kHaarLowPass = {
    0.7071067811865476, 0.7071067811865476,
};

inline constexpr std::array<double, 10> kDb5LowPass = {
    0.0033357252854737712, -0.012580751999081999, -0.006241490212798274,
    0.07757149384004572, -0.032244869584638375, -0.24229488706638203,
    0.13842814590132074, 0.7243085284377729, 0.6038292697971896,
    0.16010239797419293,
};

inline constexpr std::array<double, 20> kDb10LowPass = {
    -1.3264202894521244e-05, 9.358867032006959e-05, -0.00011646685512928545,
    -0.0006858566949597116, 0.001992405295185056, 0.001395351747052901,
    -0.010733175483330575, 0.0036065535669561697, 0.033212674059341,
    -0.029457536821875813, -0.07139414716639708, 0.09305736460357235,
    0.12736934033579325, -0.19594627437737705, -0.24984642432731538,
    0.2811723436605775, 0.6884590394536035, 0.5272011889317256,
    0.1881768000776915, 0.026670057900555554,
};

inline constexpr std::array<double, 30> kDb15LowPass = {
    6.133359913305752e-08, -6.316882325881664e-07, 1.8112704079405772e-06,
    3.36298718173758e-06, -2.8133296266047814e-05, 2.5792699155318936e-05,
    0.00015589648992059973, -0.0003595652443624688, -0.000373482354137617,
    0.0019433239803822114, -0.00024175649076162427, -0.006487734560315745,
    0.005101000360407543, 0.015083918027835902, -0.020810050169693083,
    -0.025767007328439964, 0.05478055058450761, 0.033877143923507685,
    -0.1111209360372317, -0.039666176555790945, 0.190146714007123,
    0.06528295284877282, -0.28888259656696563, -0.19320413960914543,
    0.3390025354547315, 0.6458131403574243, 0.4926317717081396,
    0.20602386398699574, 0.04674339489276627, 0.004538537361578899,
};

inline constexpr std::array<double, 10> kSym5LowPass = {
    0.027333068345077982, 0.029519490925774643, -0.039134249302383094,
    0.1993975339773936, 0.7234076904024206, 0.6339789634582119,
    0.01660210576452232, -0.17532808990845047, -0.021101834024758855,
    0.019538882735286728,
};

inline constexpr std::array<double, 20> kSym10LowPass = {
    0.0007701598091144901, 9.563267072289475e-05, -0.008641299277022422,
    -0.0014653825813050513, 0.0459272392310922, 0.011609893903711381,
    -0.15949427888491757, -0.07088053578324385, 0.47169066693843925,
    0.7695100370211071, 0.38382676106708546, -0.03553674047381755,
    -0.0319900568824278, 0.04999497207737669, 0.005764912033581909,
    -0.02035493981231129, -0.0008043589320165449, 0.004593173585311828,
    5.7036083618494284e-05, -0.0004593294210046588,
};

inline constexpr std::array<double, 30> kSym15LowPass = {
    9.712419737963348e-06, -7.35966679891947e-06, -0.00016066186637495343,
    5.512254785558665e-05, 0.0010705672194623959, -0.0002673164464718057,
    -0.0035901654473726417, 0.003423450736351241, 0.01007997708790567,
    -0.01940501143093447, -0.03887671687683349, 0.021937642719753955,
    0.04073547969681068, -0.04108266663538248, 0.11153369514261872,
    0.5786404152150345, 0.7218430296361812, 0.2439627054321663,
    -0.1966263587662373, -0.1340562984562539, 0.06839331006048024,
    0.06796982904487918, -0.008744788886477952, -0.01717125278163873,
    0.0015261382781819983, 0.003481028737064895, -0.00010815440168545525,
    -0.00040216853760293483, 2.171789015077892e-05, 2.866070852531808e-05,
};

inline constexpr std::array<double, 18> kCoif3LowPass = {
    -3.459977319727278e-05, -7.0983302506379e-05, 0.0004662169598204029,
    0.0011175187708306303, -0.0025745176881367972, -0.009007976136730624,
    0.015880544863669452, 0.03455502757329774, -0.08230192710629983,
    -0.07179982161915484, 0.42848347637737, 0.7937772226260872,
    0.40517690240911824, -0.06112339000297255, -0.06577191128146936,
    0.023452696142077168, 0.007782596425672746, -0.003793512864380802,
};

inline constexpr std::array<double, 24> kCoif4LowPass = {
    -1.7849909144933469e-06, -3.259647940030751e-06, 3.1229861599195265e-05,
    6.233885431278719e-05, -0.0002599743371222568, -0.0005890202246332165,
    0.0012665610789256603, 0.0037514346971460866, -0.0056582838001308835,
    -0.015211728187697211, 0.02508225333794961, 0.03933442260558915,
    -0.09622042453595264, -0.06662747236681717, 0.43438603311435653,
    0.7822389344242826, 0.41530842700068227, -0.05607731960356926,
    -0.08126671024919373, 0.02668230466960483, 0.01606894713157503,
    -0.007346167936268051, -0.001629492425226786, 0.000892313902537003,
};
}  // namespace tables

inline std::span<const double> low_pass_table(Family f) {
    switch (f) {
        case Family::haar: return tables::kHaarLowPass;
        case Family::db5: return tables::kDb5LowPass;
        case Family::db10: return tables::kDb10LowPass;
        case Family::db15: return tables::kDb15LowPass;
        case Family::sym5: return tables::kSym5LowPass;
        case Family::sym10: return tables::kSym10LowPass;
        case Family::sym15: return tables::kSym15LowPass;
        case Family::coif3: return tables::kCoif3LowPass;
        case Family::coif4: return tables::kCoif4LowPass;
    }
    throw InvalidArgument("unknown wavelet family");
}

struct WaveletFilter {
    Family family = Family::haar;
    std::vector<double> h;    ///< decomposition low-pass
    std::vector<double> g;    ///< decomposition high-pass, g[k] = (-1)^k h[L-1-k]
    std::vector<double> h_r;  ///< reconstruction low-pass (h reversed)
    std::vector<double> g_r;  ///< reconstruction high-pass (g reversed)

    std::size_t length() const noexcept { return h.size(); }
};

/// Largest deviation from sum(h) = sqrt(2).
inline double dc_residual(std::span<const double> h) {
    double s = 0.0;
    for (double v : h) s += v;
    return std::abs(s - std::sqrt(2.0));
}

/// Largest deviation from sum_k h[k] h[k+2m] = delta(m) over all even shifts.
inline double orthonormality_residual(std::span<const double> h) {
    double worst = 0.0;
    for (std::size_t m = 0; 2 * m < h.size(); ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k + 2 * m < h.size(); ++k) acc += h[k] * h[k + 2 * m];
        worst = std::max(worst, std::abs(acc - (m == 0 ? 1.0 : 0.0)));
    }
    return worst;
}

inline WaveletFilter wavelet_filters(Family family) {
    const auto table = low_pass_table(family);
    WaveletFilter w;
    w.family = family;
    w.h.assign(table.begin(), table.end());
    const std::size_t len = w.h.size();
    w.g.resize(len);
    for (std::size_t k = 0; k < len; ++k) w.g[k] = (k % 2 == 0 ? 1.0 : -1.0) * w.h[len - 1 - k];
    w.h_r.assign(w.h.rbegin(), w.h.rend());
    w.g_r.assign(w.g.rbegin(), w.g.rend());
#ifndef NDEBUG
    if (dc_residual(w.h) > 1e-10 || orthonormality_residual(w.h) > 1e-8)
        throw Error("wavelet table for " + std::string(to_string(family)) + " fails QMF checks");
#endif
    return w;
}

inline WaveletFilter wavelet_filters(std::string_view family) { return wavelet_filters(parse_family(family)); }

}  // namespace denoise::wavelet
