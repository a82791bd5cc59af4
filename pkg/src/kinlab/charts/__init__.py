from kinlab.charts._base import *
from kinlab.charts.linear import IdentityChart, LinearChart
from kinlab.charts.quadratic import QuadraticChart
