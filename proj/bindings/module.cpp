#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sled/simplex.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_sled_core, m) {
  m.doc() = "Core routines exposed to Python";
  m.def("project_simplex", &sled::project_simplex, py::arg("v"), py::arg("budget"));
  m.def("is_feasible", &sled::is_feasible, py::arg("v"), py::arg("budget"), py::arg("tol"));
}
