0.09375 0.018229166666666664 -10
-0.000000000000000004163336342344337 0.08411458333333333 -0.5
-0 0.0036458333333333334 1
