#include "fehmm/mesh.hpp"

#include <fstream>
#include <iomanip>

namespace fehmm {

namespace {

void write_fields(std::ofstream& out, const std::vector<VtkField>& fields, std::size_t count) {
  for (const auto& f : fields) {
    if (f.values.size() != count * static_cast<std::size_t>(f.components))
      throw std::invalid_argument("write_vtk: field '" + f.name + "' has wrong size");
    if (f.components == 1) {
      out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f.values) out << v << '\n';
    } else {
      // VTK vectors are 3D; pad 2D data with zeros
      const bool vector = f.components <= 3;
      if (vector)
        out << "VECTORS " << f.name << " double\n";
      else
        out << "FIELD FieldData 1\n" << f.name << ' ' << f.components << ' ' << count << " double\n";
      for (std::size_t i = 0; i < count; ++i) {
        for (int c = 0; c < f.components; ++c)
          out << f.values[i * f.components + c] << (c + 1 < f.components ? " " : "");
        if (vector)
          for (int c = f.components; c < 3; ++c) out << " 0";
        out << '\n';
      }
    }
  }
}

}  // namespace

void write_vtk(const std::string& path, const StructuredQuadMesh& mesh,
               const std::vector<VtkField>& point_data, const std::vector<VtkField>& cell_data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  out << std::setprecision(17);
  out << "# vtk DataFile Version 3.0\nfehmm\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_nodes() << " double\n";
  for (const auto& p : mesh.nodes) out << p.x() << ' ' << p.y() << " 0\n";
  const int ne = mesh.num_elements(), npe = mesh.nodes_per_element();
  out << "CELLS " << ne << ' ' << ne * (npe + 1) << '\n';
  for (int e = 0; e < ne; ++e) {
    out << npe;
    for (int n : mesh.element(e)) out << ' ' << n;
    out << '\n';
  }
  out << "CELL_TYPES " << ne << '\n';
  const int type = mesh.order == 1 ? 9 : 28;
  for (int e = 0; e < ne; ++e) out << type << '\n';
  if (!point_data.empty()) {
    out << "POINT_DATA " << mesh.num_nodes() << '\n';
    write_fields(out, point_data, mesh.nodes.size());
  }
  if (!cell_data.empty()) {
    out << "CELL_DATA " << ne << '\n';
    write_fields(out, cell_data, static_cast<std::size_t>(ne));
  }
}

}  // namespace fehmm
