#pragma once

namespace sqcml::units {

// Energies are in eV, times in fs.
inline constexpr double hbar = 0.6582119569;         // eV*fs
inline constexpr double wavenumber = 1.239841984e-4;  // eV per cm^-1
inline constexpr double pi = 3.14159265358979323846;

inline constexpr double from_wavenumber(double cm_inv) { return cm_inv * wavenumber; }

}  // namespace sqcml::units
