#pragma once
// Frozen expected values for the 8-robot cohort, computed by an
// independent spreadsheet oracle over the authored description files.
#include <array>
namespace cohort_expected {
inline constexpr int kRobots = 8;
inline constexpr int kFeats = 10;
inline constexpr std::array<const char*, 8> kNames = {"anymal_b", "anymal_c", "anymal_d", "spot", "a1", "go1", "go2", "b2"};
inline constexpr std::array<double, 80> kRaw = {0.29999999999999999, 0.29999999999999999, 0.29999999999999999, 1, 0.5499151000000001, 0.23009000000000002, 2.3900000000000001, 3.4500000000000002, 0.54999999999999993, 0.26999999999999996, 0.32000000000000001, 0.34000000000000002, 0.34000000000000002, 1, 0.60122880000000001, 0.20876, 2.8799999999999999, 3.9700000000000006, 0.50999999999999979, 0.15999999999999992, 0.32000000000000001, 0.35999999999999999, 0.35999999999999999, 1, 0.61099605000000001, 0.218995, 2.79, 3.9599999999999995, 0.51000000000000012, 0.16000000000000006, 0.29999999999999999, 0.33000000000000002, 0.33000000000000002, 0, 0.59942490000000004, 0.110595, 5.4200000000000008, 3.4800000000000004, 0.52999999999999969, 0.21999999999999995, 0.19, 0.20000000000000001, 0.20000000000000001, 0, 0.35702400000000001, 0.092975000000000002, 3.8399999999999999, 2.7000000000000002, 0.43000000000000005, 0.25000000000000006, 0.19, 0.22, 0.22, 0, 0.37637249999999994, 0.093625, 4.0199999999999996, 2.6499999999999999, 0.41999999999999987, 0.22, 0.20000000000000001, 0.22, 0.22, 0, 0.38698399999999999, 0.093024999999999997, 4.1600000000000001, 2.77, 0.46000000000000008, 0.21000000000000002, 0.34000000000000002, 0.35999999999999999, 0.35999999999999999, 0, 0.65611560000000002, 0.14388500000000001, 4.5599999999999996, 4.4000000000000004, 0.44000000000000006, 0.31000000000000005};
inline constexpr std::array<double, 80> kNormalized = {0.69230769230769207, 0.25, 0.25, 1, 0.5189947082759705, 1, -1, 0.21212121212121193, 1, 1, 1, 0.75000000000000044, 0.75000000000000044, 1, 0.9230840559030018, 0.68887430259271398, -0.67656765676567687, 1, 0.38461538461538258, -1, 1, 1, 1, 1, 1, 0.83816504394121694, -0.73597359735973611, 0.98484848484848309, 0.38461538461538769, -0.99999999999999745, 0.69230769230769207, 0.62500000000000022, 0.62500000000000022, -1, 0.90887855573083742, -0.74298946140101374, 1, 0.25757575757575757, 0.69230769230768874, 0.09090909090909105, -1, -1, -1, -1, -1, -1, -0.042904290429043312, -0.92424242424242387, -0.84615384615384359, 0.63636363636363824, -1, -0.75000000000000011, -0.75000000000000011, -1, -0.84763283991289651, -0.99051890748641658, 0.075907590759075383, -1, -1, 0.090909090909091939, -0.84615384615384603, -0.75000000000000011, -0.75000000000000011, -1, -0.76406852643824397, -0.99927068519126294, 0.16831683168316802, -0.81818181818181812, -0.38461538461538181, -0.090909090909089496, 1, 1, 1, -1, 1, -0.2574116617437916, 0.43234323432343169, 1, -0.69230769230768963, 1};
inline constexpr std::array<double, 64> kDist = {0, 3.3811193760349374, 3.5169519340346667, 4.5185283016532569, 5.6761553654659584, 5.7536033642972164, 5.3714981114640654, 4.9253035705407147, 3.3811193760349374, 0, 0.5068480588727361, 4.1575393768497433, 6.5642249834901847, 6.1748734292103746, 5.7487748085743791, 5.1924267037117771, 3.5169519340346667, 0.5068480588727361, 0, 4.3312359360873671, 6.8880872425115873, 6.4852934944706924, 6.0827545160973431, 5.2365371091282427, 4.5185283016532569, 4.1575393768497433, 4.3312359360873671, 0, 5.2442743272733425, 4.9249252527977809, 4.3576641272045995, 3.8017397630104566, 5.6761553654659584, 6.5642249834901847, 6.8880872425115873, 5.2442743272733425, 0, 0.97027195156224022, 1.3918833743252412, 6.4430289679494832, 5.7536033642972164, 6.1748734292103746, 6.4852934944706924, 4.9249252527977809, 0.97027195156224022, 0, 0.95297279448617578, 6.3972209557186313, 5.3714981114640654, 5.7487748085743791, 6.0827545160973431, 4.3576641272045995, 1.3918833743252412, 0.95297279448617578, 0, 6.2708727519107592, 4.9253035705407147, 5.1924267037117771, 5.2365371091282427, 3.8017397630104566, 6.4430289679494832, 6.3972209557186313, 6.2708727519107592, 0};
inline constexpr std::array<double, 10> kMin7 = {0.19, 0.20000000000000001, 0.20000000000000001, 0, 0.35702400000000001, 0.092975000000000002, 2.3900000000000001, 2.6499999999999999, 0.41999999999999987, 0.15999999999999992};
inline constexpr std::array<double, 10> kMax7 = {0.32000000000000001, 0.35999999999999999, 0.35999999999999999, 1, 0.61099605000000001, 0.23009000000000002, 5.4200000000000008, 3.9700000000000006, 0.54999999999999993, 0.26999999999999996};
inline constexpr std::array<double, 10> kMean7 = {0.25999999999999995, 0.28142857142857142, 0.28142857142857142, 0.42857142857142855, 0.4974207642857143, 0.14972357142857143, 3.6428571428571428, 3.2828571428571429, 0.4871428571428571, 0.21285714285714286};
inline constexpr std::array<double, 10> kStd7 = {0.058309518948453001, 0.061511571833174246, 0.061511571833174246, 0.49487165930539351, 0.10915007061264885, 0.060775719700403727, 0.96256672177961311, 0.53462174307005628, 0.046817056023354064, 0.038438925848782036};
inline constexpr std::array<double, 10> kMin8 = {0.19, 0.20000000000000001, 0.20000000000000001, 0, 0.35702400000000001, 0.092975000000000002, 2.3900000000000001, 2.6499999999999999, 0.41999999999999987, 0.15999999999999992};
inline constexpr std::array<double, 10> kMax8 = {0.34000000000000002, 0.35999999999999999, 0.35999999999999999, 1, 0.65611560000000002, 0.23009000000000002, 5.4200000000000008, 4.4000000000000004, 0.54999999999999993, 0.31000000000000005};
inline constexpr std::array<double, 10> kMean8 = {0.26999999999999996, 0.29125000000000001, 0.29125000000000001, 0.375, 0.51725761874999998, 0.14899375000000001, 3.7574999999999998, 3.4225000000000003, 0.48124999999999996, 0.22500000000000001};
inline constexpr std::array<double, 10> kStd8 = {0.060621778264910706, 0.063134281495871941, 0.063134281495871941, 0.48412291827592713, 0.11479994007256152, 0.056883262627837196, 0.95011512460332948, 0.62176663628728113, 0.046485884954467573, 0.048218253804964792};
inline constexpr std::array<double, 80> kPrintedTable = {0.29999999999999999, 0.29999999999999999, 0.29999999999999999, 1, 0.55000000000000004, 0.23000000000000001, 2.3900000000000001, 3.4500000000000002, 0.55000000000000004, 0.27000000000000002, 0.32000000000000001, 0.34000000000000002, 0.34000000000000002, 1, 0.59999999999999998, 0.20999999999999999, 2.8799999999999999, 3.9700000000000002, 0.51000000000000001, 0.16, 0.32000000000000001, 0.35999999999999999, 0.35999999999999999, 1, 0.60999999999999999, 0.22, 2.79, 3.96, 0.51000000000000001, 0.16, 0.29999999999999999, 0.33000000000000002, 0.33000000000000002, 0, 0.59999999999999998, 0.11, 5.4199999999999999, 3.48, 0.53000000000000003, 0.22, 0.19, 0.20000000000000001, 0.20000000000000001, 0, 0.35999999999999999, 0.089999999999999997, 3.8399999999999999, 2.7000000000000002, 0.42999999999999999, 0.25, 0.19, 0.22, 0.22, 0, 0.38, 0.089999999999999997, 4.0199999999999996, 2.6499999999999999, 0.41999999999999998, 0.22, 0.20000000000000001, 0.22, 0.22, 0, 0.39000000000000001, 0.089999999999999997, 4.1600000000000001, 2.77, 0.46000000000000002, 0.20999999999999999, 0.34000000000000002, 0.35999999999999999, 0.35999999999999999, 0, 0.66000000000000003, 0.14000000000000001, 4.5599999999999996, 4.4000000000000004, 0.44, 0.31};
}  // namespace cohort_expected
