#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dtp {

/// Static line chart: axes with min/max tick labels, one polyline per series
/// and a legend.
class SvgPlot {
  public:
    struct Series {
        std::string label;
        std::vector<double> x;
        std::vector<double> y;
    };

    SvgPlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add(std::string label, std::vector<double> x, std::vector<double> y) {
        series_.push_back({std::move(label), std::move(x), std::move(y)});
    }

    void write(std::ostream& os) const {
        constexpr double W = 640, H = 400, L = 70, R = 160, T = 40, B = 50;
        double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
        bool any = false;
        for (const auto& s : series_) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!any) {
                    x0 = x1 = s.x[i];
                    y0 = y1 = s.y[i];
                    any = true;
                }
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, s.y[i]);
                y1 = std::max(y1, s.y[i]);
            }
        }
        if (x1 - x0 < 1e-12) x1 = x0 + 1;
        if (y1 - y0 < 1e-12) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        const double pw = W - L - R;
        const double ph = H - T - B;
        auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * pw; };
        auto py = [&](double v) { return T + (y1 - v) / (y1 - y0) * ph; };

        os << std::setprecision(6);
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
           << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title_)
           << "</text>\n";
        os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
           << "\" fill=\"none\" stroke=\"black\"/>\n";
        auto label = [&](double x, double y, const std::string& text, const char* anchor) {
            os << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\">" << escape(text)
               << "</text>\n";
        };
        label(L, H - B + 16, number(x0), "start");
        label(L + pw, H - B + 16, number(x1), "end");
        label(L - 6, T + ph, number(y0), "end");
        label(L - 6, T + 10, number(y1), "end");
        label(L + pw / 2, H - 12, x_label_, "middle");
        os << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
           << T + ph / 2 << ")\">" << escape(y_label_) << "</text>\n";

        static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                        "#9467bd", "#8c564b", "#e377c2", "#17becf"};
        for (std::size_t k = 0; k < series_.size(); ++k) {
            const auto& s = series_[k];
            const char* color = palette[k % 8];
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << px(s.x[i]) << ',' << py(s.y[i]);
            os << "\"/>\n";
            const double ly = T + 14 + 18 * static_cast<double>(k);
            os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\""
               << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            label(W - R + 36, ly, s.label, "start");
        }
        os << "</svg>\n";
    }

  private:
    static std::string number(double v) {
        std::ostringstream os;
        os << std::setprecision(4) << v;
        return os.str();
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            switch (c) {
                case '<': out += "&lt;"; break;
                case '>': out += "&gt;"; break;
                case '&': out += "&amp;"; break;
                default: out += c;
            }
        }
        return out;
    }

    std::string title_;
    std::string x_label_;
    std::string y_label_;
    std::vector<Series> series_;
};

}  // namespace dtp
