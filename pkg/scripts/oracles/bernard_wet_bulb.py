import mpmath as mp
mp.mp.dps = 40
def pv(x): return mp.mpf('6.106')*mp.e**(mp.mpf('17.27')*x/(mp.mpf('237.3')+x))
def resid(t, td, T):
    Pd, Pw = pv(td), pv(T)
    return 1556*Pd - mp.mpf('1.484')*Pd*T - 1556*Pw + mp.mpf('1.484')*Pw*T + 1010*(t-T)
def bisect(t, td):
    t, td = mp.mpf(t), mp.mpf(td)
    lo, hi = td, t
    for _ in range(300):
        mid = (lo+hi)/2
        if resid(t, td, mid) > 0: lo = mid
        else: hi = mid
    return (lo+hi)/2
for t, td in [(30,20),(35,10),(25,15),(40,5),(10,-5),(0,-20)]:
    T = bisect(t, td)
    rh = 100*mp.e**(mp.mpf('17.62')*td/(mp.mpf('243.12')+td) - mp.mpf('17.62')*t/(mp.mpf('243.12')+t))
    di = t - mp.mpf('0.0055')*(100-rh)*(t-mp.mpf('14.5'))
    print(t, td, mp.nstr(T, 17), 'wbgt', mp.nstr(mp.mpf('0.67')*T+mp.mpf('0.33')*t, 17), 'rh', mp.nstr(rh,17), 'di', mp.nstr(di,17))
