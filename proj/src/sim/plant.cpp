#include "phrc/sim/plant.hpp"

#include "phrc/core/error.hpp"

namespace phrc::sim {

PlantState plant_step(const control::ImpedanceParams& imp, const PlantState& s, const Vec3& f_h, const Vec3& f_r,
                      const Vec6& y_ref, double dt) {
  if (!(dt > 0.0)) throw ConfigError("plant step needs dt > 0");
  const Vec3 e = s.x - y_ref.head<3>();
  const Vec3 de = s.v - y_ref.tail<3>();
  const Vec3 f = f_h + f_r - imp.D * de - imp.K * e;
  PlantState out;
  out.v = s.v + dt * imp.M.ldlt().solve(f);
  out.x = s.x + dt * out.v;
  return out;
}

double plant_energy(const control::ImpedanceParams& imp, const PlantState& s, const Vec6& y_ref) {
  const Vec3 e = s.x - y_ref.head<3>();
  const Vec3 de = s.v - y_ref.tail<3>();
  return 0.5 * de.dot(imp.M * de) + 0.5 * e.dot(imp.K * e);
}

}  // namespace phrc::sim
