import _pickle as cPickle
import base64

class AuthFail(Exception):
    pass

def confirmAuth(headers):
    '''
    Get AuthToken from headers, decode it with base64, and load with cPickle
    to token object.
    '''
    authToken = headers['AuthToken']
    decodedAuthToken = base64.b64decode(authToken)
    try:
        token = cPickle.loads(decodedAuthToken)
        return token
    except cPickle.UnpicklingError as e:
        raise AuthFail('AuthToken could not be decoded')
